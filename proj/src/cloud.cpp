#include "evolve/cloud.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "evolve/errors.hpp"
#include "evolve/rng.hpp"

namespace evolve {

void MemoryBlobStore::put(const std::string& key, const Bytes& value) {
    std::lock_guard lock(mu_);
    blobs_[key] = value;
}

std::optional<Bytes> MemoryBlobStore::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = blobs_.find(key);
    if (it == blobs_.end()) return std::nullopt;
    return it->second;
}

bool MemoryBlobStore::contains(const std::string& key) const {
    std::lock_guard lock(mu_);
    return blobs_.contains(key);
}

size_t MemoryBlobStore::count() const {
    std::lock_guard lock(mu_);
    return blobs_.size();
}

DirBlobStore::DirBlobStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
}

void DirBlobStore::put(const std::string& key, const Bytes& value) {
    std::ofstream out(root_ / key, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write blob: " + (root_ / key).string());
    out.write(reinterpret_cast<const char*>(value.data()), std::streamsize(value.size()));
}

std::optional<Bytes> DirBlobStore::get(const std::string& key) const {
    std::ifstream in(root_ / key, std::ios::binary);
    if (!in) return std::nullopt;
    Bytes out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return out;
}

bool DirBlobStore::contains(const std::string& key) const {
    return std::filesystem::exists(root_ / key);
}

size_t DirBlobStore::count() const {
    size_t n = 0;
    for (auto it = std::filesystem::directory_iterator(root_);
         it != std::filesystem::directory_iterator(); ++it)
        n++;
    return n;
}

// --- CloudPeer ---

CloudPeer::CloudPeer(std::unique_ptr<BlobStore> store) : store_(std::move(store)) {
    if (!store_) store_ = std::make_unique<MemoryBlobStore>();
}

void CloudPeer::bind_link(EmulatedLink& link) { link_ = &link; }

void CloudPeer::set_notify_sink(std::function<void(const Frame&)> sink) {
    notify_sink_ = std::move(sink);
}

void CloudPeer::pump(EmulatedLink& link) {
    while (auto msg = link.recv(Side::b)) {
        Frame f;
        try {
            f = decode_frame(*msg);
        } catch (const ProtocolError&) {
            continue;  // garbage on the wire; cloud drops it
        }
        for (auto& reply : handle(f)) link.send(Side::b, encode_frame(reply));
    }
}

void CloudPeer::push_notification(Frame frame) {
    if (!link_) return;
    link_->send(Side::b, encode_frame(frame));
    if (!notify_sink_) return;
    while (auto msg = link_->recv(Side::a)) {
        notify_sink_(decode_frame(*msg));
    }
}

void CloudPeer::reply_error(std::vector<Frame>& out, const std::string& what) {
    ByteWriter w;
    w.u8(cloudop::kError);
    w.lp_string(what);
    out.push_back({MsgType::vas_data, w.take()});
}

// --- ImageRepo ---

ImageRepo::ImageRepo(crypto::KeyPair repo_keys, std::unique_ptr<BlobStore> store)
    : CloudPeer(std::move(store)), keys_(repo_keys) {}

void ImageRepo::put(const UpdateManifest& manifest, Blob image) {
    if (image.size() != manifest.size_bytes)
        throw ValidationError("repo put rejected: image size does not match manifest");
    if (crypto::blob_hash(image) != manifest.image_hash)
        throw ValidationError("repo put rejected: image hash does not match manifest");
    if (!verify_manifest(manifest, keys_.pk))
        throw ValidationError("repo put rejected: manifest not signed by this repository");

    {
        std::lock_guard lock(mu_);
        auto& per_ecu = manifests_[manifest.ecu_model];
        auto it = per_ecu.find(manifest.version);
        if (it != per_ecu.end()) return;  // idempotent re-put
        per_ecu.emplace(manifest.version, manifest);
        std::string key = to_hex(manifest.image_hash);
        if (!image.is_synthetic()) store_->put(key, image.data);
        images_[key] = std::move(image);
    }
    ByteWriter w;
    w.u8(cloudop::kNotifyManifest);
    Bytes enc = manifest.encode();
    w.u16(uint16_t(enc.size()));
    w.raw(enc);
    push_notification({MsgType::vas_data, w.take()});
}

size_t ImageRepo::stored_images() const {
    std::lock_guard lock(mu_);
    return images_.size();
}

std::vector<Frame> ImageRepo::handle(const Frame& request) {
    std::vector<Frame> out;
    if (request.body.empty()) {
        reply_error(out, "empty request");
        return out;
    }
    uint8_t op = request.body[0];
    if (op != cloudop::kGetImage || request.body.size() != 33) {
        reply_error(out, "unsupported repo op");
        return out;
    }
    crypto::Digest hash;
    std::copy_n(request.body.begin() + 1, hash.size(), hash.begin());

    Blob image;
    {
        std::lock_guard lock(mu_);
        auto it = images_.find(to_hex(hash));
        if (it == images_.end()) {
            reply_error(out, "image not found");
            return out;
        }
        image = it->second;
    }
    uint64_t offset = 0;
    uint64_t remaining_real = image.data.size();
    uint64_t remaining_synth = image.synthetic;
    while (remaining_real > 0 || remaining_synth > 0) {
        ByteWriter w;
        w.u8(cloudop::kImageChunk);
        uint64_t synth = 0;
        if (remaining_real > 0) {
            uint64_t n = std::min<uint64_t>(remaining_real, kTransferChunkBytes);
            w.raw(ByteSpan(image.data.data() + offset, size_t(n)));
            offset += n;
            remaining_real -= n;
        } else {
            synth = std::min<uint64_t>(remaining_synth, kTransferChunkBytes);
            remaining_synth -= synth;
        }
        out.push_back({MsgType::vas_data, w.take(), synth});
    }
    ByteWriter end;
    end.u8(cloudop::kImageEnd);
    out.push_back({MsgType::vas_data, end.take()});
    return out;
}

// --- SiemBackend ---

SiemBackend::SiemBackend(std::unique_ptr<BlobStore> store) : CloudPeer(std::move(store)) {}

void SiemBackend::put_fl_parameters(uint64_t version, uint64_t seed) {
    SeededRng rng(SeededRng::derive(seed, version));
    fl_.model_version = version;
    fl_.blob.resize(kFlBlobBytes);
    for (size_t i = 0; i + 8 <= fl_.blob.size(); i += 8) {
        uint64_t v = rng.next_u64();
        std::memcpy(fl_.blob.data() + i, &v, 8);
    }
    ByteWriter w;
    w.u8(cloudop::kFlNotify);
    w.u64(version);
    push_notification({MsgType::vas_data, w.take()});
}

std::vector<Frame> SiemBackend::handle(const Frame& request) {
    std::vector<Frame> out;
    if (request.body.empty()) {
        reply_error(out, "empty request");
        return out;
    }
    uint8_t op = request.body[0];
    if (op == cloudop::kSiemIngest) {
        IngestRecord rec;
        rec.arrival_ms = link_ ? link_->now_ms() : 0;
        rec.stored_bytes = request.body.size() + request.synthetic_body;
        ByteReader r(ByteSpan(request.body.data() + 1, request.body.size() - 1));
        try {
            uint16_t alerts = r.u16();
            rec.alert_count = alerts;
            for (uint16_t i = 0; i < alerts; i++) {
                uint16_t len = r.u16();
                r.raw(len);
            }
            uint16_t digest_len = r.u16();
            Bytes digest = r.raw(digest_len);
            rec.has_raw_batch = r.u8() != 0;
            store_->put("ingest-" + std::to_string(ingests_.size()), digest);
        } catch (const std::exception&) {
            reply_error(out, "malformed ingest");
            return out;
        }
        ingests_.push_back(rec);
        ByteWriter w;
        w.u8(cloudop::kSiemAck);
        out.push_back({MsgType::vas_data, w.take()});
        return out;
    }
    if (op == cloudop::kFlFetch) {
        if (fl_.model_version == 0) {
            reply_error(out, "no FL parameters published");
            return out;
        }
        ByteWriter w;
        w.u8(cloudop::kFlBlob);
        w.u64(fl_.model_version);
        w.raw(fl_.blob);
        out.push_back({MsgType::vas_data, w.take()});
        return out;
    }
    reply_error(out, "unsupported siem op");
    return out;
}

// --- PaymentGateway ---

PaymentGateway::PaymentGateway(std::unique_ptr<BlobStore> store) : CloudPeer(std::move(store)) {}

std::string PaymentGateway::settle(const ReconciliationRecord& record) {
    if (!record.verify_signatures())
        throw AuthenticationError("settlement refused: signature verification failed");
    Bytes enc = record.encode();
    std::string key = to_hex(crypto::sha256(enc));
    std::lock_guard lock(mu_);
    auto it = settlements_.find(key);
    if (it != settlements_.end()) return it->second;
    std::string id = "stl-" + std::to_string(next_id_++) + "-" + key.substr(0, 8);
    settlements_.emplace(key, id);
    store_->put(key, enc);
    return id;
}

size_t PaymentGateway::settlement_count() const {
    std::lock_guard lock(mu_);
    return settlements_.size();
}

std::vector<Frame> PaymentGateway::handle(const Frame& request) {
    std::vector<Frame> out;
    if (request.body.size() != 1 + kReconciliationBytes || request.body[0] != cloudop::kSettle) {
        reply_error(out, "unsupported gateway op");
        return out;
    }
    ReconciliationRecord rec =
        ReconciliationRecord::decode(ByteSpan(request.body.data() + 1, kReconciliationBytes));
    try {
        std::string id = settle(rec);
        ByteWriter w;
        w.u8(cloudop::kSettleAck);
        w.lp_string(id);
        out.push_back({MsgType::vas_data, w.take()});
    } catch (const AuthenticationError& e) {
        reply_error(out, e.what());
    }
    return out;
}

std::string gateway_settle_over_link(Conduit& cloud, const ReconciliationRecord& record) {
    ByteWriter w;
    w.u8(cloudop::kSettle);
    w.raw(record.encode());
    WireMsg reply;
    try {
        reply = cloud.request(encode_frame({MsgType::vas_data, w.take()}));
    } catch (const TransportError&) {
        throw UnavailableError("payment gateway unreachable");
    }
    Frame f = decode_frame(reply);
    if (f.body.empty()) throw ProtocolError("empty gateway reply");
    if (f.body[0] == cloudop::kError) {
        ByteReader r(ByteSpan(f.body.data() + 1, f.body.size() - 1));
        throw AuthenticationError("settlement refused: " + r.lp_string());
    }
    if (f.body[0] != cloudop::kSettleAck) throw ProtocolError("unexpected gateway reply");
    ByteReader r(ByteSpan(f.body.data() + 1, f.body.size() - 1));
    return r.lp_string();
}

uint64_t CloudPeer::bytes_to_cloud() const { return link_ ? link_->bytes_sent(Side::a) : 0; }
uint64_t CloudPeer::bytes_from_cloud() const { return link_ ? link_->bytes_sent(Side::b) : 0; }

}  // namespace evolve

#include "evolve/update.hpp"

#include <fstream>

#include "evolve/bus.hpp"
#include "evolve/errors.hpp"
#include "evolve/frame.hpp"
#include "evolve/session.hpp"

namespace evolve {

std::string Version::to_string() const {
    return std::to_string(major) + "." + std::to_string(minor) + "." + std::to_string(patch);
}

Bytes UpdateManifest::signed_payload() const {
    ByteWriter w;
    w.raw(to_bytes("evolve.update.manifest"));
    w.lp_string(ecu_model);
    w.u16(version.major);
    w.u16(version.minor);
    w.u16(version.patch);
    w.u64(size_bytes);
    w.raw(image_hash);
    return w.take();
}

Bytes UpdateManifest::encode() const {
    ByteWriter w;
    w.lp_string(ecu_model);
    w.u16(version.major);
    w.u16(version.minor);
    w.u16(version.patch);
    w.u64(size_bytes);
    w.raw(image_hash);
    if (signature.size() != crypto::kDefaultSigWidth)
        throw ValidationError("manifest signature must be 64 bytes");
    w.raw(signature);
    return w.take();
}

UpdateManifest UpdateManifest::decode(ByteSpan data) {
    try {
        ByteReader r(data);
        UpdateManifest m;
        m.ecu_model = r.lp_string();
        m.version.major = r.u16();
        m.version.minor = r.u16();
        m.version.patch = r.u16();
        m.size_bytes = r.u64();
        m.image_hash = r.arr<32>();
        m.signature = r.raw(crypto::kDefaultSigWidth);
        r.expect_done();
        return m;
    } catch (const std::exception& e) {
        throw ProtocolError(std::string("malformed manifest: ") + e.what());
    }
}

UpdateManifest make_signed_manifest(const crypto::KeyPair& repo_keys, const std::string& ecu_model,
                                    Version version, const Blob& image) {
    UpdateManifest m;
    m.ecu_model = ecu_model;
    m.version = version;
    m.size_bytes = image.size();
    m.image_hash = crypto::blob_hash(image);
    m.signature = crypto::sign(repo_keys, m.signed_payload());
    return m;
}

bool verify_manifest(const UpdateManifest& manifest, const crypto::PublicKey& repo_key) {
    if (manifest.signature.size() != crypto::kDefaultSigWidth) return false;
    return crypto::verify(repo_key, manifest.signed_payload(), manifest.signature);
}

EcuState apply_update(const EcuState& state, const UpdateManifest& manifest, const Blob& image,
                      const crypto::PublicKey& repo_key) {
    if (manifest.ecu_model != state.ecu_model) throw ApplyError("manifest targets another ECU");
    if (!verify_manifest(manifest, repo_key))
        throw ApplyError("manifest signature verification failed");
    if (manifest.version <= state.current_version)
        throw ApplyError("downgrade rejected: " + manifest.version.to_string() +
                         " <= " + state.current_version.to_string());
    if (image.size() != manifest.size_bytes) throw ApplyError("image size mismatch");
    if (crypto::blob_hash(image) != manifest.image_hash)
        throw ApplyError("image hash mismatch; update not applied");

    EcuState next = state;
    next.previous = {state.current_version, state.current_image};
    next.current_version = manifest.version;
    next.current_image = image;
    return next;
}

EcuState rollback(const EcuState& state) {
    if (!state.previous) throw RollbackError("no retained image to roll back to");
    EcuState next = state;
    next.current_version = state.previous->first;
    next.current_image = state.previous->second;
    next.previous.reset();
    return next;
}

// --- UpdateCache ---

UpdateCache::UpdateCache(uint64_t capacity_bytes, std::optional<std::filesystem::path> disk_dir)
    : capacity_(capacity_bytes), disk_dir_(std::move(disk_dir)) {
    if (disk_dir_) std::filesystem::create_directories(*disk_dir_);
}

void UpdateCache::put(const UpdateManifest& manifest, Blob image) {
    if (image.size() != manifest.size_bytes) throw IntegrityError("cache put: size mismatch");
    if (crypto::blob_hash(image) != manifest.image_hash)
        throw IntegrityError("cache put: hash mismatch");

    std::lock_guard lock(mu_);
    Key key{manifest.ecu_model, manifest.version};
    if (auto it = entries_.find(key); it != entries_.end()) {
        bytes_used_ -= it->second.image.size();
        lru_.remove(key);
        entries_.erase(it);
    }
    if (disk_dir_ && !image.is_synthetic()) {
        auto path = *disk_dir_ / to_hex(manifest.image_hash);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(image.data.data()),
                  std::streamsize(image.data.size()));
    }
    bytes_used_ += image.size();
    entries_.emplace(key, CacheEntry{manifest, std::move(image), true});
    lru_.push_back(key);
    evict_if_needed();
}

void UpdateCache::evict_if_needed() {
    while (bytes_used_ > capacity_ && lru_.size() > 1) {
        Key victim = lru_.front();
        lru_.pop_front();
        auto it = entries_.find(victim);
        if (it == entries_.end()) continue;
        bytes_used_ -= it->second.image.size();
        if (disk_dir_) {
            std::error_code ec;
            std::filesystem::remove(*disk_dir_ / to_hex(it->second.manifest.image_hash), ec);
        }
        entries_.erase(it);
        evictions_ += 1;
    }
}

std::optional<CacheEntry> UpdateCache::get(const std::string& ecu_model, Version version) {
    std::lock_guard lock(mu_);
    Key key{ecu_model, version};
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    lru_.remove(key);
    lru_.push_back(key);  // most recently served
    return it->second;
}

bool UpdateCache::contains(const std::string& ecu_model, Version version) const {
    std::lock_guard lock(mu_);
    return entries_.contains(Key{ecu_model, version});
}

uint64_t UpdateCache::bytes_used() const {
    std::lock_guard lock(mu_);
    return bytes_used_;
}

uint64_t UpdateCache::evictions() const {
    std::lock_guard lock(mu_);
    return evictions_;
}

// --- UpdateService ---

UpdateService::UpdateService(crypto::PublicKey repo_key, EventBus* bus, UpdateCache* cache)
    : repo_key_(repo_key), bus_(bus), cache_(cache) {}

bool UpdateService::notify_update(const UpdateManifest& manifest) {
    if (!verify_manifest(manifest, repo_key_)) {
        if (bus_) {
            Event alert;
            alert.topic = "siem/alerts";
            ByteWriter w;
            w.lp_string("update-notification-rejected");
            w.lp_string(manifest.ecu_model);
            alert.payload = w.take();
            alert.criticality = Criticality::standard;
            bus_->publish("vas_update", std::move(alert));
        }
        return false;
    }
    std::lock_guard lock(mu_);
    auto it = pending_.find(manifest.ecu_model);
    if (it != pending_.end() && manifest.version <= it->second.version)
        return true;  // duplicate or stale notification; single pending entry kept
    pending_.insert_or_assign(manifest.ecu_model, manifest);
    if (bus_) {
        Event e;
        e.topic = "updates/available";
        e.payload = manifest.encode();
        e.criticality = Criticality::standard;
        bus_->publish("cloud_agent", std::move(e));
    }
    return true;
}

CacheEntry UpdateService::fetch_update(const UpdateManifest& manifest, Conduit* cloud) {
    if (!verify_manifest(manifest, repo_key_)) throw IntegrityError("manifest signature invalid");
    if (cache_) {
        if (auto hit = cache_->get(manifest.ecu_model, manifest.version)) return *hit;
    }
    if (!cloud) cloud = cloud_;
    if (!cloud) throw FetchError("no cloud link configured; retry when connected");

    {
        std::lock_guard lock(mu_);
        in_flight_.insert(manifest.ecu_model + "@" + manifest.version.to_string());
    }
    Blob image;
    try {
        image = cloud_fetch_image(*cloud, manifest.image_hash, manifest.size_bytes);
    } catch (...) {
        std::lock_guard lock(mu_);
        in_flight_.erase(manifest.ecu_model + "@" + manifest.version.to_string());
        throw;
    }
    {
        std::lock_guard lock(mu_);
        in_flight_.erase(manifest.ecu_model + "@" + manifest.version.to_string());
    }

    if (image.size() != manifest.size_bytes)
        throw IntegrityError("downloaded image size mismatch; entry discarded");
    if (crypto::blob_hash(image) != manifest.image_hash)
        throw IntegrityError("downloaded image hash mismatch; entry discarded");

    CacheEntry entry{manifest, std::move(image), true};
    if (cache_) cache_->put(entry.manifest, entry.image);
    if (bus_) {
        Event e;
        e.topic = "updates/fetched";
        e.payload = manifest.encode();
        bus_->publish("vas_update", std::move(e));
    }
    return entry;
}

std::optional<UpdateManifest> UpdateService::best_available(const std::string& ecu_model,
                                                            Version min_version) const {
    auto it = pending_.find(ecu_model);
    if (it == pending_.end()) return std::nullopt;
    if (it->second.version <= min_version) return std::nullopt;
    return it->second;
}

Blob cloud_fetch_image(Conduit& cloud, const crypto::Digest& image_hash, uint64_t expect_size) {
    ByteWriter req;
    req.u8(cloudop::kGetImage);
    req.raw(image_hash);
    WireMsg reply;
    try {
        reply = cloud.request(encode_frame({MsgType::vas_data, req.take()}));
    } catch (const TransportError&) {
        throw FetchError("cloud unreachable; retry later");
    }

    Blob image;
    for (;;) {
        Frame f = decode_frame(reply);
        if (f.body.empty()) throw FetchError("empty cloud reply");
        uint8_t op = f.body[0];
        if (op == cloudop::kError) throw FetchError("cloud rejected image request");
        if (op == cloudop::kImageEnd) break;
        if (op != cloudop::kImageChunk) throw FetchError("unexpected cloud reply");
        image.data.insert(image.data.end(), f.body.begin() + 1, f.body.end());
        image.synthetic += f.synthetic_body;
        if (image.size() > expect_size) throw IntegrityError("cloud sent more than expected");
        auto next = cloud.poll();
        if (!next) throw FetchError("cloud stream interrupted");
        reply = std::move(*next);
    }
    return image;
}

}  // namespace evolve

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "evolve/bytes.hpp"
#include "evolve/crypto.hpp"
#include "evolve/frame.hpp"
#include "evolve/payments.hpp"
#include "evolve/session.hpp"
#include "evolve/siem.hpp"
#include "evolve/update.hpp"

namespace evolve {

/// Keyed blob storage behind every cloud endpoint. The directory-backed
/// variety lays out one file per key under an endpoint-named directory.
class BlobStore {
public:
    virtual ~BlobStore() = default;
    virtual void put(const std::string& key, const Bytes& value) = 0;
    virtual std::optional<Bytes> get(const std::string& key) const = 0;
    virtual bool contains(const std::string& key) const = 0;
    virtual size_t count() const = 0;
};

class MemoryBlobStore : public BlobStore {
public:
    void put(const std::string& key, const Bytes& value) override;
    std::optional<Bytes> get(const std::string& key) const override;
    bool contains(const std::string& key) const override;
    size_t count() const override;

private:
    mutable std::mutex mu_;
    std::map<std::string, Bytes> blobs_;
};

class DirBlobStore : public BlobStore {
public:
    explicit DirBlobStore(std::filesystem::path root);
    void put(const std::string& key, const Bytes& value) override;
    std::optional<Bytes> get(const std::string& key) const override;
    bool contains(const std::string& key) const override;
    size_t count() const override;
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
};

/// Base for the in-process cloud endpoints. Each endpoint sits on the far
/// side (side B) of one emulated cellular link; every operation traverses
/// that link, so the link's byte counters are the endpoint's traffic meters.
class CloudPeer : public Peer {
public:
    explicit CloudPeer(std::unique_ptr<BlobStore> store = nullptr);

    void bind_link(EmulatedLink& link);
    /// Unsolicited cloud-to-charger deliveries (repo/FL notifications) go
    /// through this sink after traversing the link.
    void set_notify_sink(std::function<void(const Frame&)> sink);

    void pump(EmulatedLink& link) override;

    uint64_t bytes_to_cloud() const;
    uint64_t bytes_from_cloud() const;

    BlobStore& store() { return *store_; }

protected:
    virtual std::vector<Frame> handle(const Frame& request) = 0;
    void push_notification(Frame frame);
    void reply_error(std::vector<Frame>& out, const std::string& what);

    EmulatedLink* link_ = nullptr;
    std::unique_ptr<BlobStore> store_;
    std::function<void(const Frame&)> notify_sink_;
};

/// Firmware image repository: stores (manifest, image) pairs and notifies
/// subscribed chargers when something new lands.
class ImageRepo : public CloudPeer {
public:
    explicit ImageRepo(crypto::KeyPair repo_keys, std::unique_ptr<BlobStore> store = nullptr);

    /// Stores the pair after checking the image hash against the manifest
    /// (mismatch rejected) and pushes a notification. Re-putting the same
    /// version is idempotent.
    void put(const UpdateManifest& manifest, Blob image);

    const crypto::KeyPair& keys() const { return keys_; }
    size_t stored_images() const;

protected:
    std::vector<Frame> handle(const Frame& request) override;

private:
    crypto::KeyPair keys_;
    mutable std::mutex mu_;
    std::map<std::string, Blob> images_;  // keyed by hex(image_hash)
    std::map<std::string, std::map<Version, UpdateManifest>> manifests_;
};

/// SIEM backend: persists alert/digest ingests with an arrival timestamp and
/// serves FL parameter packs.
class SiemBackend : public CloudPeer {
public:
    explicit SiemBackend(std::unique_ptr<BlobStore> store = nullptr);

    struct IngestRecord {
        double arrival_ms = 0;
        uint16_t alert_count = 0;
        bool has_raw_batch = false;
        uint64_t stored_bytes = 0;
    };

    /// Publishes a new FL parameter pack (deterministic pseudo-random blob)
    /// and notifies the charger that a newer version exists.
    void put_fl_parameters(uint64_t version, uint64_t seed);

    const std::vector<IngestRecord>& ingests() const { return ingests_; }
    uint64_t fl_version() const { return fl_.model_version; }

protected:
    std::vector<Frame> handle(const Frame& request) override;

private:
    std::vector<IngestRecord> ingests_;
    FlParameters fl_;
};

/// Payment gateway: verifies both signatures on a reconciliation record and
/// issues settlement ids; duplicate records settle to the original id.
class PaymentGateway : public CloudPeer {
public:
    explicit PaymentGateway(std::unique_ptr<BlobStore> store = nullptr);

    /// Direct-call form used by charger-side code and tests.
    std::string settle(const ReconciliationRecord& record);

    size_t settlement_count() const;

protected:
    std::vector<Frame> handle(const Frame& request) override;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::string> settlements_;  // record hash -> id
    uint64_t next_id_ = 1;
};

/// Settle a record across the cellular link.
std::string gateway_settle_over_link(Conduit& cloud, const ReconciliationRecord& record);

}  // namespace evolve

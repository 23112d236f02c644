#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evolve/bytes.hpp"
#include "evolve/crypto.hpp"

namespace evolve {

class EventBus;
class Conduit;

struct Version {
    uint16_t major = 0;
    uint16_t minor = 0;
    uint16_t patch = 0;

    auto operator<=>(const Version&) const = default;
    std::string to_string() const;
};

/// Signed metadata for one firmware image. The canonical encoding is
/// length-prefixed fields in declaration order with the version as three
/// 16-bit big-endian integers; the repository signature covers everything
/// before the signature slot.
struct UpdateManifest {
    std::string ecu_model;
    Version version;
    uint64_t size_bytes = 0;
    crypto::Digest image_hash{};
    Bytes signature;  // 64 bytes under the repository key

    Bytes signed_payload() const;
    Bytes encode() const;
    static UpdateManifest decode(ByteSpan data);
};

UpdateManifest make_signed_manifest(const crypto::KeyPair& repo_keys, const std::string& ecu_model,
                                    Version version, const Blob& image);
bool verify_manifest(const UpdateManifest& manifest, const crypto::PublicKey& repo_key);

/// Vehicle-side ECU bookkeeping: current image plus the pre-update image
/// retained for rollback.
struct EcuState {
    std::string ecu_model;
    Version current_version;
    Blob current_image;
    std::optional<std::pair<Version, Blob>> previous;
};

/// Verifies end to end (repository signature, image hash, version
/// monotonicity) and installs; the replaced image is retained. Throws
/// ApplyError and leaves the state untouched on any failure.
EcuState apply_update(const EcuState& state, const UpdateManifest& manifest, const Blob& image,
                      const crypto::PublicKey& repo_key);

/// Restores the retained image and clears it. Throws RollbackError when
/// nothing is retained.
EcuState rollback(const EcuState& state);

struct CacheEntry {
    UpdateManifest manifest;
    Blob image;
    bool verified = false;
};

/// Charger-side image cache: least-recently-served eviction, configurable
/// byte capacity, optional content-addressed on-disk store (one file per
/// image named by the hex of its hash).
class UpdateCache {
public:
    explicit UpdateCache(uint64_t capacity_bytes = 4ull * 1024 * 1024 * 1024,
                         std::optional<std::filesystem::path> disk_dir = std::nullopt);

    void put(const UpdateManifest& manifest, Blob image);
    /// Marks the entry as served (LRU touch) and returns it.
    std::optional<CacheEntry> get(const std::string& ecu_model, Version version);
    bool contains(const std::string& ecu_model, Version version) const;
    uint64_t bytes_used() const;
    uint64_t evictions() const;

private:
    struct Key {
        std::string ecu;
        Version version;
        auto operator<=>(const Key&) const = default;
    };
    void evict_if_needed();

    uint64_t capacity_;
    std::optional<std::filesystem::path> disk_dir_;
    mutable std::mutex mu_;
    std::map<Key, CacheEntry> entries_;
    std::list<Key> lru_;  // front = least recently served
    uint64_t bytes_used_ = 0;
    uint64_t evictions_ = 0;
};

/// Charger-side software update service: receives repository notifications,
/// fetches and verifies images over the cellular link, and serves vehicles
/// from the cache.
class UpdateService {
public:
    UpdateService(crypto::PublicKey repo_key, EventBus* bus, UpdateCache* cache);

    /// Repository notification. A valid manifest lands in the pending set
    /// (idempotently) and is announced on updates/available; a bad signature
    /// is rejected and raises an alert on siem/alerts.
    bool notify_update(const UpdateManifest& manifest);

    /// Cache hit returns without cloud traffic; a miss downloads the image
    /// over `cloud`, verifies hash and signature, and stores it. Throws
    /// IntegrityError (corrupt download) or FetchError (cloud unreachable).
    CacheEntry fetch_update(const UpdateManifest& manifest, Conduit* cloud);

    /// Newest pending/cached manifest strictly newer than min_version.
    std::optional<UpdateManifest> best_available(const std::string& ecu_model,
                                                 Version min_version) const;

    const std::map<std::string, UpdateManifest>& pending() const { return pending_; }
    void set_cloud(Conduit* cloud) { cloud_ = cloud; }
    Conduit* cloud() const { return cloud_; }
    void set_repo_key(const crypto::PublicKey& repo_key) { repo_key_ = repo_key; }
    const crypto::PublicKey& repo_key() const { return repo_key_; }

private:
    crypto::PublicKey repo_key_;
    EventBus* bus_;
    UpdateCache* cache_;
    Conduit* cloud_ = nullptr;
    std::map<std::string, UpdateManifest> pending_;  // newest per ECU model
    std::set<std::string> in_flight_;                // fetch deduplication
    std::mutex mu_;
};

// Cloud image transfer ops (cleartext frames on the charger-cloud link).
namespace cloudop {
constexpr uint8_t kGetImage = 0x01;
constexpr uint8_t kImageChunk = 0x81;
constexpr uint8_t kImageEnd = 0x82;
constexpr uint8_t kNotifyManifest = 0x83;
constexpr uint8_t kError = 0x7E;

constexpr uint8_t kSiemIngest = 0x10;
constexpr uint8_t kSiemAck = 0x90;
constexpr uint8_t kFlFetch = 0x11;
constexpr uint8_t kFlBlob = 0x91;
constexpr uint8_t kFlNotify = 0x92;

constexpr uint8_t kSettle = 0x20;
constexpr uint8_t kSettleAck = 0xA0;
}  // namespace cloudop

constexpr uint64_t kTransferChunkBytes = 1024 * 1024;

/// Download an image by hash over a charger-cloud conduit. Returns the image
/// and the wire duration. Throws FetchError when the cloud does not answer.
Blob cloud_fetch_image(Conduit& cloud, const crypto::Digest& image_hash, uint64_t expect_size);

}  // namespace evolve

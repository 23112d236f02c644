#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evolve/bytes.hpp"
#include "evolve/session.hpp"  // Criticality

namespace evolve {

struct Event {
    std::string topic;
    Bytes payload;
    std::string publisher_role;
    Criticality criticality = Criticality::standard;
    uint64_t sequence = 0;  // assigned by the bus, strictly increasing per topic
};

enum class Permission : uint8_t { publish = 1, subscribe = 2 };

struct AclEntry {
    std::string role;
    std::string topic_pattern;  // exact path or trailing "*" prefix match
    bool allow_publish = false;
    bool allow_subscribe = false;

    bool operator==(const AclEntry&) const = default;
};

/// true when `topic` falls under `pattern` ("a/*" covers "a/b" and "a/b/c",
/// not "a"; a bare pattern is an exact match).
bool topic_matches(const std::string& pattern, const std::string& topic);
/// true when every topic matched by `inner` is matched by `outer`.
bool pattern_covers(const std::string& outer, const std::string& inner);

struct TopicStats {
    uint64_t published = 0;
    uint64_t delivered = 0;
    uint64_t dropped = 0;
};

class EventBus;

/// Bounded per-subscriber delivery queue. When saturated, an incoming
/// critical event evicts the oldest queued standard event (counted as a
/// drop); critical events are never dropped. Relative order of surviving
/// events is untouched, so per-topic total order holds for every subscriber.
class Subscription {
public:
    std::optional<Event> poll();
    size_t pending() const;
    const std::string& role() const { return role_; }
    const std::string& pattern() const { return pattern_; }
    void cancel();

private:
    friend class EventBus;
    Subscription(EventBus* bus, std::string role, std::string pattern, size_t capacity)
        : bus_(bus), role_(std::move(role)), pattern_(std::move(pattern)), capacity_(capacity) {}

    EventBus* bus_;
    std::string role_;
    std::string pattern_;
    size_t capacity_;
    bool cancelled_ = false;
    std::deque<Event> queue_;
};

constexpr size_t kDefaultQueueCapacity = 1024;
constexpr size_t kMaxPayloadBytes = 16ull * 1024 * 1024;

class EventBus {
public:
    explicit EventBus(size_t queue_capacity = kDefaultQueueCapacity);

    /// Replaces the ACL table atomically. Already-queued deliveries made
    /// under the old table stay queued. Throws ConfigError on duplicate
    /// (role, pattern) entries with conflicting permissions.
    void set_acl(std::vector<AclEntry> entries);
    std::vector<AclEntry> acl() const;

    /// Throws AccessDeniedError when no entry grants `role` subscribe rights
    /// covering `topic_pattern`.
    std::shared_ptr<Subscription> subscribe(const std::string& role,
                                            const std::string& topic_pattern);

    /// Delivers to every eligible matching subscription; returns how many
    /// queues accepted the event. Throws AccessDeniedError or PayloadError.
    size_t publish(const std::string& role, Event event);

    TopicStats topic_stats(const std::string& topic) const;
    uint64_t next_sequence(const std::string& topic) const;

    /// The platform table: charging stack owns charging/*, each VAS owns its
    /// own namespace, and no VAS role can publish into charging/*.
    static std::vector<AclEntry> default_platform_acl();
    static std::vector<AclEntry> load_acl_file(const std::filesystem::path& path);

private:
    friend class Subscription;
    bool allowed_locked(const std::string& role, Permission perm, const std::string& target) const;

    mutable std::mutex mu_;
    size_t queue_capacity_;
    std::vector<AclEntry> acl_;
    std::vector<std::shared_ptr<Subscription>> subs_;
    std::map<std::string, uint64_t> sequences_;
    std::map<std::string, TopicStats> stats_;
};

}  // namespace evolve

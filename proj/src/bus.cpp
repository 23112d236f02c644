#include "evolve/bus.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "evolve/errors.hpp"

namespace evolve {

bool topic_matches(const std::string& pattern, const std::string& topic) {
    if (pattern.empty() || topic.empty()) return false;
    if (pattern.back() == '*') {
        std::string prefix = pattern.substr(0, pattern.size() - 1);  // keeps the '/'
        if (prefix.empty()) return true;                             // bare "*"
        return topic.size() > prefix.size() && topic.compare(0, prefix.size(), prefix) == 0;
    }
    return pattern == topic;
}

bool pattern_covers(const std::string& outer, const std::string& inner) {
    if (outer.empty() || inner.empty()) return false;
    if (outer.back() != '*') return outer == inner;
    std::string prefix = outer.substr(0, outer.size() - 1);
    if (inner.back() == '*') {
        std::string inner_prefix = inner.substr(0, inner.size() - 1);
        return inner_prefix.size() >= prefix.size() &&
               inner_prefix.compare(0, prefix.size(), prefix) == 0;
    }
    return topic_matches(outer, inner);
}

std::optional<Event> Subscription::poll() {
    if (!bus_) return std::nullopt;
    std::lock_guard lock(bus_->mu_);
    if (queue_.empty()) return std::nullopt;
    Event e = std::move(queue_.front());
    queue_.pop_front();
    return e;
}

size_t Subscription::pending() const {
    if (!bus_) return 0;
    std::lock_guard lock(bus_->mu_);
    return queue_.size();
}

void Subscription::cancel() {
    if (!bus_) return;
    std::lock_guard lock(bus_->mu_);
    cancelled_ = true;
}

EventBus::EventBus(size_t queue_capacity) : queue_capacity_(queue_capacity) {}

void EventBus::set_acl(std::vector<AclEntry> entries) {
    for (size_t i = 0; i < entries.size(); i++) {
        for (size_t j = i + 1; j < entries.size(); j++) {
            const auto& a = entries[i];
            const auto& b = entries[j];
            if (a.role == b.role && a.topic_pattern == b.topic_pattern &&
                (a.allow_publish != b.allow_publish || a.allow_subscribe != b.allow_subscribe))
                throw ConfigError("conflicting ACL entries for (" + a.role + ", " +
                                  a.topic_pattern + ")");
        }
    }
    std::lock_guard lock(mu_);
    acl_ = std::move(entries);
}

std::vector<AclEntry> EventBus::acl() const {
    std::lock_guard lock(mu_);
    return acl_;
}

bool EventBus::allowed_locked(const std::string& role, Permission perm,
                              const std::string& target) const {
    for (const auto& e : acl_) {
        if (e.role != role) continue;
        bool granted = perm == Permission::publish ? e.allow_publish : e.allow_subscribe;
        if (!granted) continue;
        if (pattern_covers(e.topic_pattern, target)) return true;
    }
    return false;  // default deny
}

std::shared_ptr<Subscription> EventBus::subscribe(const std::string& role,
                                                  const std::string& topic_pattern) {
    std::lock_guard lock(mu_);
    if (!allowed_locked(role, Permission::subscribe, topic_pattern))
        throw AccessDeniedError("subscribe denied for role '" + role + "' on pattern '" +
                                topic_pattern + "'");
    auto sub = std::shared_ptr<Subscription>(
        new Subscription(this, role, topic_pattern, queue_capacity_));
    subs_.push_back(sub);
    return sub;
}

size_t EventBus::publish(const std::string& role, Event event) {
    if (event.topic.empty()) throw ValidationError("event topic must be non-empty");
    if (event.topic.find('*') != std::string::npos)
        throw ValidationError("event topic must be concrete");
    if (event.payload.size() > kMaxPayloadBytes)
        throw PayloadError("event payload exceeds 16 MiB");

    std::lock_guard lock(mu_);
    if (!allowed_locked(role, Permission::publish, event.topic))
        throw AccessDeniedError("publish denied for role '" + role + "' on topic '" + event.topic +
                                "'");
    event.publisher_role = role;
    event.sequence = ++sequences_[event.topic];

    auto& st = stats_[event.topic];
    st.published += 1;

    size_t delivered = 0;
    // Drop cancelled/expired subscriptions opportunistically.
    std::erase_if(subs_, [](const std::shared_ptr<Subscription>& s) {
        return s->cancelled_ && s->queue_.empty();
    });
    for (auto& sub : subs_) {
        if (sub->cancelled_) continue;
        if (!topic_matches(sub->pattern_, event.topic)) continue;
        if (!allowed_locked(sub->role_, Permission::subscribe, event.topic)) continue;

        if (sub->queue_.size() >= sub->capacity_) {
            if (event.criticality == Criticality::critical) {
                auto victim = std::find_if(sub->queue_.begin(), sub->queue_.end(),
                                           [](const Event& e) {
                                               return e.criticality == Criticality::standard;
                                           });
                if (victim != sub->queue_.end()) {
                    stats_[victim->topic].dropped += 1;
                    stats_[victim->topic].delivered -= 1;
                    sub->queue_.erase(victim);
                }
                // No standard victim: the queue grows past its bound rather
                // than losing a critical event.
            } else {
                st.dropped += 1;
                continue;
            }
        }
        sub->queue_.push_back(event);
        st.delivered += 1;
        delivered += 1;
    }
    return delivered;
}

TopicStats EventBus::topic_stats(const std::string& topic) const {
    std::lock_guard lock(mu_);
    auto it = stats_.find(topic);
    return it == stats_.end() ? TopicStats{} : it->second;
}

uint64_t EventBus::next_sequence(const std::string& topic) const {
    std::lock_guard lock(mu_);
    auto it = sequences_.find(topic);
    return (it == sequences_.end() ? 0 : it->second) + 1;
}

std::vector<AclEntry> EventBus::default_platform_acl() {
    return {
        {"charging_stack", "charging/*", true, true},
        {"cloud_agent", "updates/available", true, false},
        {"vas_update", "updates/*", false, true},
        {"vas_update", "updates/fetched", true, false},
        {"vas_update", "siem/alerts", true, false},
        {"vas_update", "charging/state", false, true},
        {"vas_siem", "siem/*", true, true},
        {"vas_siem", "charging/state", false, true},
        {"vas_payments", "payments/*", true, true},
        {"vas_payments", "charging/state", false, true},
        {"telemetry", "telemetry/*", true, true},
        {"telemetry", "charging/state", false, true},
    };
}

std::vector<AclEntry> EventBus::load_acl_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open ACL config: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad ACL config: " + std::string(e.what()));
    }
    if (!doc.is_array()) throw ConfigError("ACL config must be a JSON array");
    std::vector<AclEntry> out;
    for (const auto& item : doc) {
        AclEntry e;
        try {
            e.role = item.at("role").get<std::string>();
            e.topic_pattern = item.at("topic_pattern").get<std::string>();
            for (const auto& p : item.at("allow")) {
                std::string perm = p.get<std::string>();
                if (perm == "publish")
                    e.allow_publish = true;
                else if (perm == "subscribe")
                    e.allow_subscribe = true;
                else
                    throw ConfigError("unknown permission: " + perm);
            }
        } catch (const nlohmann::json::exception& ex) {
            throw ConfigError(std::string("bad ACL entry: ") + ex.what());
        }
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace evolve

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "evolve/bus.hpp"
#include "evolve/errors.hpp"
#include "evolve/rng.hpp"

using namespace evolve;

namespace {

Event make_event(const std::string& topic, const std::string& payload,
                 Criticality crit = Criticality::standard) {
    Event e;
    e.topic = topic;
    e.payload = to_bytes(payload);
    e.criticality = crit;
    return e;
}

}  // namespace

TEST_CASE("topic pattern matching") {
    CHECK(topic_matches("a/b", "a/b"));
    CHECK_FALSE(topic_matches("a/b", "a/b/c"));
    CHECK(topic_matches("a/*", "a/b"));
    CHECK(topic_matches("a/*", "a/b/c"));
    CHECK_FALSE(topic_matches("a/*", "a"));
    CHECK(topic_matches("*", "anything/at/all"));
    CHECK(pattern_covers("a/*", "a/b/*"));
    CHECK(pattern_covers("a/*", "a/b"));
    CHECK_FALSE(pattern_covers("a/b", "a/*"));
    CHECK_FALSE(pattern_covers("a/*", "b/c"));
}

TEST_CASE("empty ACL table denies everything") {
    EventBus bus;
    CHECK_THROWS_AS(bus.subscribe("any", "updates/*"), AccessDeniedError);
    CHECK_THROWS_AS(bus.publish("any", make_event("updates/new", "x")), AccessDeniedError);
}

TEST_CASE("subscribe-only grant allows subscribe but not publish") {
    EventBus bus;
    bus.set_acl({{"vas_update", "updates/*", false, true}});
    auto sub = bus.subscribe("vas_update", "updates/new");
    CHECK(sub != nullptr);
    CHECK_THROWS_AS(bus.publish("vas_update", make_event("updates/new", "x")),
                    AccessDeniedError);
}

TEST_CASE("conflicting duplicate entries are a configuration error") {
    EventBus bus;
    CHECK_THROWS_AS(bus.set_acl({{"r", "t/*", true, false}, {"r", "t/*", false, true}}),
                    ConfigError);
    // identical duplicates are fine
    bus.set_acl({{"r", "t/*", true, true}, {"r", "t/*", true, true}});
}

TEST_CASE("fan-out delivers to every subscriber in identical order") {
    EventBus bus;
    bus.set_acl({{"pub", "t/*", true, false}, {"sub", "t/*", false, true}});
    auto s1 = bus.subscribe("sub", "t/*");
    auto s2 = bus.subscribe("sub", "t/a");
    for (int i = 0; i < 10; i++)
        CHECK(bus.publish("pub", make_event("t/a", std::to_string(i))) == 2);

    std::vector<uint64_t> seq1, seq2;
    while (auto e = s1->poll()) seq1.push_back(e->sequence);
    while (auto e = s2->poll()) seq2.push_back(e->sequence);
    CHECK(seq1 == seq2);
    for (size_t i = 1; i < seq1.size(); i++) CHECK(seq1[i] == seq1[i - 1] + 1);
}

TEST_CASE("publish with zero subscribers delivers to nobody") {
    EventBus bus;
    bus.set_acl({{"pub", "t/*", true, false}});
    CHECK(bus.publish("pub", make_event("t/a", "x")) == 0);
}

TEST_CASE("oversize payloads are rejected") {
    EventBus bus;
    bus.set_acl({{"pub", "t/*", true, false}});
    Event e;
    e.topic = "t/a";
    e.payload.resize(16 * 1024 * 1024 + 1);
    CHECK_THROWS_AS(bus.publish("pub", std::move(e)), PayloadError);
}

TEST_CASE("critical events evict queued standard events when saturated") {
    EventBus bus(1);  // queue capacity one
    bus.set_acl({{"pub", "t/*", true, false}, {"sub", "t/*", false, true}});
    auto sub = bus.subscribe("sub", "t/*");

    CHECK(bus.publish("pub", make_event("t/a", "standard-1")) == 1);
    // standard into a full queue: dropped, counted
    CHECK(bus.publish("pub", make_event("t/a", "standard-2")) == 0);
    // critical into a full queue: evicts the standard event
    CHECK(bus.publish("pub", make_event("t/a", "critical-1", Criticality::critical)) == 1);

    auto first = sub->poll();
    REQUIRE(first.has_value());
    CHECK(first->criticality == Criticality::critical);
    CHECK_FALSE(sub->poll().has_value());

    auto st = bus.topic_stats("t/a");
    CHECK(st.published == 3);
    CHECK(st.delivered == 1);
    CHECK(st.dropped == 2);
    CHECK(st.delivered + st.dropped == st.published * 1);
}

TEST_CASE("critical events are never dropped even beyond capacity") {
    EventBus bus(2);
    bus.set_acl({{"pub", "t/*", true, false}, {"sub", "t/*", false, true}});
    auto sub = bus.subscribe("sub", "t/*");
    for (int i = 0; i < 5; i++)
        CHECK(bus.publish("pub", make_event("t/a", "c", Criticality::critical)) == 1);
    CHECK(sub->pending() == 5);
}

TEST_CASE("per-topic sequence is strictly increasing") {
    EventBus bus;
    bus.set_acl({{"pub", "*", true, false}, {"sub", "*", false, true}});
    auto sub = bus.subscribe("sub", "*");
    bus.publish("pub", make_event("a/x", "1"));
    bus.publish("pub", make_event("b/y", "1"));
    bus.publish("pub", make_event("a/x", "2"));
    auto e1 = sub->poll(), e2 = sub->poll(), e3 = sub->poll();
    CHECK(e1->sequence == 1);
    CHECK(e2->sequence == 1);  // independent counter per topic
    CHECK(e3->sequence == 2);
}

TEST_CASE("default platform table keeps VAS roles out of charging topics") {
    EventBus bus;
    bus.set_acl(EventBus::default_platform_acl());
    for (const char* role : {"vas_update", "vas_siem", "vas_payments"}) {
        CHECK_THROWS_AS(bus.publish(role, make_event("charging/state", "spoof")),
                        AccessDeniedError);
        CHECK_THROWS_AS(bus.publish(role, make_event("charging/limits", "spoof")),
                        AccessDeniedError);
    }
    // the charging stack itself publishes fine
    CHECK_NOTHROW(bus.publish("charging_stack", make_event("charging/state", "ok")));
    // each VAS publishes in its own namespace
    CHECK_NOTHROW(bus.publish("vas_siem", make_event("siem/alerts", "a")));
    CHECK_NOTHROW(bus.publish("vas_payments", make_event("payments/reconciled", "r")));
    CHECK_NOTHROW(bus.publish("vas_update", make_event("updates/fetched", "m")));
    CHECK_THROWS_AS(bus.publish("vas_update", make_event("updates/available", "m")),
                    AccessDeniedError);  // only the cloud agent announces
}

TEST_CASE("shipped ACL config matches the built-in table") {
    auto loaded = EventBus::load_acl_file(std::filesystem::path(EVOLVE_CONFIG_DIR) /
                                          "acl_default.json");
    CHECK(loaded == EventBus::default_platform_acl());
}

TEST_CASE("acl replacement is atomic and keeps queued deliveries") {
    EventBus bus;
    bus.set_acl({{"pub", "t/*", true, false}, {"sub", "t/*", false, true}});
    auto sub = bus.subscribe("sub", "t/*");
    bus.publish("pub", make_event("t/a", "before"));
    bus.set_acl({});  // revoke everything
    auto e = sub->poll();
    REQUIRE(e.has_value());  // in-flight delivery under the old table completes
    CHECK_THROWS_AS(bus.publish("pub", make_event("t/a", "after")), AccessDeniedError);
}

TEST_CASE("randomized isolation: no delivery ever violates the table") {
    // 1500 random publishes across random tables; every event delivered to a
    // subscriber must be covered by a subscribe grant for that role.
    SeededRng rng(99);
    const std::vector<std::string> roles = {"r0", "r1", "r2", "r3"};
    const std::vector<std::string> topics = {"a/x", "a/y", "b/x", "b/y/z", "c"};
    const std::vector<std::string> patterns = {"a/*", "b/*", "a/x", "b/y/*", "c", "*"};

    int checked = 0;
    for (int round = 0; round < 30; round++) {
        EventBus bus(16);
        std::vector<AclEntry> table;
        size_t entries = 2 + rng.below(6);
        for (size_t i = 0; i < entries; i++) {
            AclEntry e;
            e.role = roles[rng.below(roles.size())];
            e.topic_pattern = patterns[rng.below(patterns.size())];
            e.allow_publish = rng.below(2) == 1;
            e.allow_subscribe = rng.below(2) == 1;
            bool duplicate = false;
            for (const auto& prev : table)
                if (prev.role == e.role && prev.topic_pattern == e.topic_pattern)
                    duplicate = true;
            if (!duplicate) table.push_back(e);
        }
        bus.set_acl(table);

        auto allowed = [&](const std::string& role, bool pub, const std::string& target) {
            for (const auto& e : table) {
                if (e.role != role) continue;
                if (pub && !e.allow_publish) continue;
                if (!pub && !e.allow_subscribe) continue;
                if (pattern_covers(e.topic_pattern, target)) return true;
            }
            return false;
        };

        struct Live {
            std::string role;
            std::shared_ptr<Subscription> sub;
        };
        std::vector<Live> subs;
        for (int i = 0; i < 6; i++) {
            const auto& role = roles[rng.below(roles.size())];
            const auto& pattern = patterns[rng.below(patterns.size())];
            try {
                subs.push_back({role, bus.subscribe(role, pattern)});
                CHECK(allowed(role, false, pattern));
            } catch (const AccessDeniedError&) {
                CHECK_FALSE(allowed(role, false, pattern));
            }
        }
        for (int i = 0; i < 50; i++) {
            const auto& role = roles[rng.below(roles.size())];
            const auto& topic = topics[rng.below(topics.size())];
            Event e = make_event(topic, "payload",
                                 rng.below(4) == 0 ? Criticality::critical
                                                   : Criticality::standard);
            try {
                bus.publish(role, std::move(e));
                CHECK(allowed(role, true, topic));
            } catch (const AccessDeniedError&) {
                CHECK_FALSE(allowed(role, true, topic));
            }
            checked++;
        }
        for (auto& live : subs) {
            while (auto e = live.sub->poll()) {
                CHECK(allowed(live.role, false, e->topic));
                CHECK(topic_matches(live.sub->pattern(), e->topic));
            }
        }
    }
    CHECK(checked == 1500);
}

TEST_CASE("bus is safe under concurrent publishers and subscribers") {
    EventBus bus;
    bus.set_acl({{"pub", "t/*", true, false}, {"sub", "t/*", false, true}});
    auto sub = bus.subscribe("sub", "t/*");
    std::atomic<int> received{0};
    std::atomic<bool> done{false};
    std::thread consumer([&] {
        uint64_t last_seq_t0 = 0;
        for (;;) {
            if (auto e = sub->poll()) {
                received.fetch_add(1);
                if (e->topic == "t/0") {
                    CHECK(e->sequence > last_seq_t0);  // per-topic order
                    last_seq_t0 = e->sequence;
                }
            } else if (done.load()) {
                if (!sub->poll()) break;
            } else {
                std::this_thread::yield();
            }
        }
    });
    std::vector<std::thread> pubs;
    for (int t = 0; t < 2; t++)
        pubs.emplace_back([&bus, t] {
            for (int i = 0; i < 1000; i++)
                bus.publish("pub", make_event("t/" + std::to_string(t), "x"));
        });
    for (auto& th : pubs) th.join();
    done.store(true);
    consumer.join();

    // everything published is accounted for as delivered or dropped
    auto st0 = bus.topic_stats("t/0");
    auto st1 = bus.topic_stats("t/1");
    CHECK(st0.published == 1000);
    CHECK(st1.published == 1000);
    CHECK(st0.delivered + st0.dropped == 1000);
    CHECK(st1.delivered + st1.dropped == 1000);
    CHECK(uint64_t(received.load()) == st0.delivered + st1.delivered);
}

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evolve/charger.hpp"
#include "evolve/cloud.hpp"
#include "evolve/link.hpp"
#include "evolve/session.hpp"
#include "evolve/vehicle.hpp"

namespace evolve {

/// Wiring for the three-party desk-scale world: one charger, one or more
/// vehicles on PLC (or counterfactual cellular) links, and the three cloud
/// endpoints behind cellular links.
struct PlatformConfig {
    LinkProfile vehicle_profile = LinkProfile::builtin("EVolve100");
    TransportModel transport = TransportModel::ideal();
    LinkProfile repo_profile = LinkProfile::builtin("4G");
    LinkProfile siem_cloud_profile = LinkProfile::builtin("5G");
    LinkProfile gateway_profile = LinkProfile::builtin("5G");
    TransportModel cloud_transport = TransportModel::ideal();
    uint64_t seed = 1;
    bool vas_enabled = true;
    bool with_cloud = true;
    std::vector<CorrelationRule> siem_rules;
    std::optional<std::filesystem::path> cache_dir;
};

class Platform {
public:
    explicit Platform(PlatformConfig config);

    /// Adds a vehicle with its own PLC link to the charger; returns its index.
    size_t add_vehicle();

    Vehicle& vehicle(size_t i = 0) { return *vehicles_[i]; }
    Conduit& vehicle_conduit(size_t i = 0) { return *vehicle_conduits_[i]; }
    EmulatedLink& vehicle_link(size_t i = 0) { return *vehicle_links_[i]; }

    /// SDP + session establishment + SNP + service selection (charging first,
    /// then every requested VAS). Returns the live session; elapsed emulated
    /// time is the handshake cost.
    struct Connected {
        Session session;
        SdpResponse sdp;
        double handshake_ms = 0;
    };
    Connected connect(size_t vehicle_index, const std::vector<uint16_t>& services);

    Charger& charger() { return *charger_; }
    ImageRepo& repo() { return *repo_; }
    SiemBackend& siem_backend() { return *siem_backend_; }
    PaymentGateway& gateway() { return *gateway_; }
    EmulatedLink* repo_link() { return repo_link_.get(); }
    EmulatedLink* siem_link() { return siem_link_.get(); }
    EmulatedLink* gateway_link() { return gateway_link_.get(); }

    const PlatformConfig& config() const { return config_; }

private:
    PlatformConfig config_;
    std::unique_ptr<Charger> charger_;
    std::unique_ptr<ImageRepo> repo_;
    std::unique_ptr<SiemBackend> siem_backend_;
    std::unique_ptr<PaymentGateway> gateway_;
    std::unique_ptr<EmulatedLink> repo_link_, siem_link_, gateway_link_;
    std::vector<std::unique_ptr<Conduit>> cloud_conduits_;
    std::vector<std::unique_ptr<Vehicle>> vehicles_;
    std::vector<std::unique_ptr<EmulatedLink>> vehicle_links_;
    std::vector<std::unique_ptr<Conduit>> vehicle_conduits_;
};

}  // namespace evolve

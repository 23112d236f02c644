#include "evolve/platform.hpp"

namespace evolve {

Platform::Platform(PlatformConfig config) : config_(std::move(config)) {
    ChargerConfig cc;
    cc.seed = SeededRng::derive(config_.seed, 0xC0);
    cc.siem_rules = config_.siem_rules;
    cc.cache_dir = config_.cache_dir;
    cc.vas_enabled = config_.vas_enabled;
    charger_ = std::make_unique<Charger>(cc);

    if (config_.with_cloud) {
        auto repo_keys = crypto::KeyPair::from_seed(SeededRng::derive(config_.seed, 0xFE0));
        repo_ = std::make_unique<ImageRepo>(repo_keys);
        siem_backend_ = std::make_unique<SiemBackend>();
        gateway_ = std::make_unique<PaymentGateway>();

        // Cellular links between charger and each cloud endpoint.
        repo_link_ = open_link(config_.repo_profile, config_.cloud_transport,
                               SeededRng::derive(config_.seed, 0xD1));
        siem_link_ = open_link(config_.siem_cloud_profile, config_.cloud_transport,
                               SeededRng::derive(config_.seed, 0xD2));
        gateway_link_ = open_link(config_.gateway_profile, config_.cloud_transport,
                                  SeededRng::derive(config_.seed, 0xD3));

        repo_->bind_link(*repo_link_);
        siem_backend_->bind_link(*siem_link_);
        gateway_->bind_link(*gateway_link_);

        auto sink = [this](const Frame& f) { charger_->on_cloud_frame(f); };
        repo_->set_notify_sink(sink);
        siem_backend_->set_notify_sink(sink);
        gateway_->set_notify_sink(sink);

        cloud_conduits_.push_back(std::make_unique<Conduit>(*repo_link_, *repo_));
        charger_->set_image_repo(cloud_conduits_.back().get());
        cloud_conduits_.push_back(std::make_unique<Conduit>(*siem_link_, *siem_backend_));
        charger_->set_siem_backend(cloud_conduits_.back().get());
        cloud_conduits_.push_back(std::make_unique<Conduit>(*gateway_link_, *gateway_));
        charger_->set_payment_gateway(cloud_conduits_.back().get());

        charger_->set_repo_key(repo_keys.pk);
    }
}

size_t Platform::add_vehicle() {
    size_t index = vehicles_.size();
    vehicles_.push_back(
        std::make_unique<Vehicle>(SeededRng::derive(config_.seed, 0xA0 + index)));
    vehicle_links_.push_back(open_link(config_.vehicle_profile, config_.transport,
                                       SeededRng::derive(config_.seed, 0xB0 + index)));
    vehicle_conduits_.push_back(std::make_unique<Conduit>(*vehicle_links_.back(), *charger_));
    charger_->authorize_vehicle(vehicles_.back()->credentials.keys.pk);
    return index;
}

Platform::Connected Platform::connect(size_t vehicle_index,
                                      const std::vector<uint16_t>& services) {
    Vehicle& veh = *vehicles_[vehicle_index];
    Conduit& conduit = *vehicle_conduits_[vehicle_index];
    double start = conduit.link().now_ms();

    std::vector<Conduit*> scope = {&conduit};
    DiscoveryResult found = sdp_discover(scope, veh.rng);

    Connected out;
    out.sdp = found.response;
    out.session = establish_session(veh.credentials, found.response, conduit, veh.rng);
    negotiate_services(out.session);
    select_service(out.session, kSvcCharging);
    for (uint16_t svc : services)
        if (svc != kSvcCharging) select_service(out.session, svc);
    out.handshake_ms = conduit.link().now_ms() - start;
    return out;
}

}  // namespace evolve

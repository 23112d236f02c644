#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "evolve/link.hpp"

namespace evolve {

struct Scenario {
    enum class Name { stability, updates, siem_upload, fl_pull, naive_payment, micropayments };

    Name name = Name::stability;
    std::string profile = "EVolve100";
    TransportModel transport = TransportModel::ideal();
    int samples = 300;
    uint64_t seed = 1;
    std::vector<int> bursts = {1, 10, 100};  // micropayments only
    bool reconnect_per_sample = false;
    std::vector<LinkProfile> extra_profiles;

    void validate() const;
};

Scenario::Name scenario_from_string(const std::string& s);  // throws UsageError
const char* to_string(Scenario::Name name);

// Payload sizes the scenarios exchange. "KB" payloads are 1024 bytes; the
// big transfers use decimal MB as in the benchmark write-ups.
constexpr uint64_t kSmallPayloadBytes = 1024;
constexpr uint64_t kUpdateImageBytes = 100'000'000;
constexpr uint64_t kLogUploadBytes = 100'000'000;
constexpr uint64_t kFlPullBytes = 1'000'000;
constexpr uint64_t kAckBytes = 64;

/// Drives the full protocol path (SDP, session, SNP, service selection, VAS
/// exchange) on an emulated link and returns one Measurement per sample (per
/// burst count for micropayments).
std::vector<Measurement> run_scenario(const Scenario& scenario);

/// Total emulated time for n micropayment bursts over one session
/// (handshake, session start and reconciliation excluded).
double micropayment_latency_ms(const LinkProfile& profile, const TransportModel& transport,
                               int n_bursts, uint64_t seed = 1);

struct SummaryRow {
    std::string scenario;
    std::string profile;
    size_t samples = 0;
    double mean_ms = 0;
    double p50_ms = 0;
    double p95_ms = 0;
    double stdev_ms = 0;
    double coefficient_of_variation = 0;
};

// CSV header: scenario,profile,transport,sample,request_bytes,response_bytes,
// handshake_ms,rtt_ms
void write_csv(std::ostream& out, const std::vector<Measurement>& measurements);
/// Throws ValidationError naming the 1-based line number on a malformed row.
std::vector<Measurement> read_csv(std::istream& in);

std::vector<SummaryRow> summarize(const std::vector<Measurement>& measurements);
std::string render_table(const std::vector<SummaryRow>& rows);
/// Whitespace-separated columns, gnuplot-friendly.
std::string render_dat(const std::vector<SummaryRow>& rows);

// Small statistics helpers shared by the report path and the test suites.
double mean_of(const std::vector<double>& xs);
double stdev_of(const std::vector<double>& xs);          // sample standard deviation
double percentile_of(std::vector<double> xs, double q);  // nearest-rank

struct LineFit {
    double slope = 0;
    double intercept = 0;
    double r_squared = 0;
};
LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace evolve

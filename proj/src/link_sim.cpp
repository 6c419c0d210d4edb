#include "fluxshard/link_sim.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fluxshard/common.hpp"

namespace fluxshard {

double LinkTrace::period_ms() const {
    if (t_ms.empty()) throw std::invalid_argument("empty trace");
    if (t_ms.size() == 1) return t_ms[0] + 1000.0;  // constant link
    return t_ms.back() + (t_ms.back() - t_ms[t_ms.size() - 2]);
}

double LinkTrace::bandwidth_at(double t) const {
    if (t_ms.empty()) throw std::invalid_argument("empty trace");
    const double period = period_ms();
    double u = std::fmod(t, period);
    if (u < 0) u += period;
    // Last sample whose start time is <= u.
    size_t lo = 0, hi = t_ms.size();
    while (lo + 1 < hi) {
        const size_t mid = (lo + hi) / 2;
        if (t_ms[mid] <= u)
            lo = mid;
        else
            hi = mid;
    }
    if (u < t_ms[0]) return bps.back();  // wrapped tail before the first sample
    return bps[lo];
}

LinkTrace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace: " + path);
    LinkTrace tr;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("t_ms", 0) == 0) continue;  // header
        double t = 0, b = 0;
        if (std::sscanf(line.c_str(), "%lf,%lf", &t, &b) != 2)
            throw ConfigError("trace line " + std::to_string(line_no) + ": expected t_ms,bits_per_sec");
        if (b <= 0) throw ConfigError("trace line " + std::to_string(line_no) + ": bandwidth must be positive");
        if (!tr.t_ms.empty() && t <= tr.t_ms.back())
            throw ConfigError("trace line " + std::to_string(line_no) + ": timestamps must increase");
        tr.t_ms.push_back(t);
        tr.bps.push_back(b);
    }
    if (tr.t_ms.empty()) throw ConfigError("trace file has no samples: " + path);
    return tr;
}

void save_trace(const LinkTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << "t_ms,bits_per_sec\n";
    char buf[96];
    for (size_t k = 0; k < trace.t_ms.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.3f,%.3f\n", trace.t_ms[k], trace.bps[k]);
        out << buf;
    }
}

LinkTrace generate_trace(const std::string& tier, double seconds, uint64_t seed) {
    double mean, sd;
    if (tier == "low") {
        mean = 40.4e6;
        sd = 36.6e6;
    } else if (tier == "medium") {
        mean = 382.8e6;
        sd = 419.1e6;
    } else if (tier == "high") {
        mean = 596.9e6;
        sd = 467.9e6;
    } else {
        throw ConfigError("unknown bandwidth tier: " + tier);
    }
    // Log-normal marginals matched to (mean, sd); AR(1) persistence so fades
    // last long enough to matter at frame granularity.
    const double sig2 = std::log(1.0 + (sd / mean) * (sd / mean));
    const double sig = std::sqrt(sig2);
    const double mu = std::log(mean) - 0.5 * sig2;
    const double phi = 0.98;
    constexpr double kFloorBps = 1e6;
    constexpr double kStepMs = 100.0;

    Rng rng(seed ^ fnv1a64(tier));
    LinkTrace tr;
    double z = mu + sig * rng.next_gauss();
    const int n = std::max(1, int(seconds * 1000.0 / kStepMs));
    for (int k = 0; k < n; ++k) {
        tr.t_ms.push_back(k * kStepMs);
        tr.bps.push_back(std::max(kFloorBps, std::exp(z)));
        z = mu + phi * (z - mu) + std::sqrt(1.0 - phi * phi) * sig * rng.next_gauss();
    }
    return tr;
}

double transfer_time(const LinkTrace& trace, size_t bytes, double start_ms, double propagation_ms) {
    if (bytes == 0) return propagation_ms;
    const double period = trace.period_ms();
    double remaining_bits = double(bytes) * 8.0;
    double t = start_ms;
    // Walk step segments until drained. Each iteration covers at most one
    // segment; bandwidth is strictly positive so this terminates.
    for (;;) {
        const double bw = trace.bandwidth_at(t);
        double u = std::fmod(t, period);
        if (u < 0) u += period;
        // End of the current segment in wrapped coordinates.
        double seg_end = period;
        for (size_t k = 0; k < trace.t_ms.size(); ++k) {
            if (trace.t_ms[k] > u) {
                seg_end = trace.t_ms[k];
                break;
            }
        }
        const double span = seg_end - u;
        const double can_drain = bw * span / 1000.0;
        if (remaining_bits <= can_drain) {
            t += remaining_bits / bw * 1000.0;
            return (t - start_ms) + propagation_ms;
        }
        remaining_bits -= can_drain;
        t += span;
    }
}

}  // namespace fluxshard

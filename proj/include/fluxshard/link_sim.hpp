#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fluxshard {

// Bandwidth trace: a step function of bits/sec over virtual time. Sample k
// holds on [t_k, t_{k+1}); the trace repeats with the period implied by its
// final step so long runs never fall off the end.
struct LinkTrace {
    std::vector<double> t_ms;
    std::vector<double> bps;

    double period_ms() const;
    double bandwidth_at(double t) const;  // bps at virtual time t (wrapped)
};

// CSV with header "t_ms,bits_per_sec".
LinkTrace load_trace(const std::string& path);
void save_trace(const LinkTrace& trace, const std::string& path);

// Synthetic tier generator: AR(1) in log space matched to the tier's
// mean/std, 100 ms steps, clipped at the 1 Mbps floor.
//   low: 40.4 +- 36.6 Mbps, medium: 382.8 +- 419.1, high: 596.9 +- 467.9
LinkTrace generate_trace(const std::string& tier, double seconds, uint64_t seed);

// Realized one-way latency in ms for `bytes` entering the link at virtual
// time start_ms: drains the payload through the step function, then adds the
// fixed propagation delay. Zero bytes cost propagation only.
double transfer_time(const LinkTrace& trace, size_t bytes, double start_ms,
                     double propagation_ms = 20.0);

}  // namespace fluxshard

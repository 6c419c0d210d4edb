#include "fluxshard/report.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fluxshard/common.hpp"

namespace fluxshard {

namespace {
constexpr const char* kHeader =
    "frame,mode,endpoint,rho_e,rho_c,reuse,compute_ratio,tx_bytes,T_est_ms,T_realized_ms,"
    "fidelity";
}

RunSummary summarize(const std::vector<FrameRecord>& records) {
    RunSummary s;
    s.mean_fidelity = 0.0;  // struct default (1.0) is the no-data convention
    for (const FrameRecord& r : records) {
        if (r.frame == 0) continue;
        s.frames += 1;
        s.cloud_fraction += r.endpoint == Endpoint::kCloud ? 1.0 : 0.0;
        s.mean_rho_e += r.rho_e;
        s.mean_rho_c += r.rho_c;
        s.mean_reuse += r.reuse;
        s.mean_compute += r.compute_ratio;
        s.mean_tx_bytes += double(r.tx_bytes);
        s.mean_t_est += r.t_est_ms;
        s.mean_t_realized += r.t_realized_ms;
        s.mean_fidelity += r.fidelity;
        s.fallbacks += r.fallback ? 1 : 0;
    }
    if (s.frames > 0) {
        const double n = double(s.frames);
        s.cloud_fraction /= n;
        s.mean_rho_e /= n;
        s.mean_rho_c /= n;
        s.mean_reuse /= n;
        s.mean_compute /= n;
        s.mean_tx_bytes /= n;
        s.mean_t_est /= n;
        s.mean_t_realized /= n;
        s.mean_fidelity /= n;
    } else {
        s.mean_fidelity = 1.0;
    }
    return s;
}

void write_metrics_csv(const std::vector<FrameRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write metrics CSV: " + path);
    out << kHeader << "\n";
    char buf[512];
    for (const FrameRecord& r : records) {
        std::snprintf(buf, sizeof(buf),
                      "%llu,%s,%s,%.6f,%.6f,%.6f,%.6f,%zu,%.6f,%.6f,%.6f\n",
                      (unsigned long long)r.frame, mode_name(r.mode), endpoint_name(r.endpoint),
                      r.rho_e, r.rho_c, r.reuse, r.compute_ratio, r.tx_bytes, r.t_est_ms,
                      r.t_realized_ms, r.fidelity);
        out << buf;
    }
    const RunSummary s = summarize(records);
    const char* mode = records.empty() ? "-" : mode_name(records.front().mode);
    std::snprintf(buf, sizeof(buf), "mean,%s,-,%.6f,%.6f,%.6f,%.6f,%.1f,%.6f,%.6f,%.6f\n", mode,
                  s.mean_rho_e, s.mean_rho_c, s.mean_reuse, s.mean_compute, s.mean_tx_bytes,
                  s.mean_t_est, s.mean_t_realized, s.mean_fidelity);
    out << buf;
}

std::vector<FrameRecord> load_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open metrics CSV: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kHeader)
        throw ConfigError(path + ": unexpected CSV header");
    std::vector<FrameRecord> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line.rfind("mean,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 11)
            throw ConfigError(path + ": malformed row at line " + std::to_string(lineno));
        FrameRecord r;
        r.frame = std::stoull(fields[0]);
        r.mode = parse_mode(fields[1]);
        if (fields[2] == "edge")
            r.endpoint = Endpoint::kEdge;
        else if (fields[2] == "cloud")
            r.endpoint = Endpoint::kCloud;
        else
            throw ConfigError(path + ": unknown endpoint at line " + std::to_string(lineno));
        r.rho_e = std::stod(fields[3]);
        r.rho_c = std::stod(fields[4]);
        r.reuse = std::stod(fields[5]);
        r.compute_ratio = std::stod(fields[6]);
        r.tx_bytes = std::stoull(fields[7]);
        r.t_est_ms = std::stod(fields[8]);
        r.t_realized_ms = std::stod(fields[9]);
        r.fidelity = std::stod(fields[10]);
        out.push_back(r);
    }
    return out;
}

std::string format_summary_table(const std::vector<std::pair<std::string, RunSummary>>& rows) {
    std::string out;
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%-28s %7s %8s %9s %9s %10s %11s %9s\n", "run", "frames",
                  "cloud%", "reuse", "compute", "tx_bytes", "latency_ms", "fidelity");
    out += buf;
    for (const auto& [name, s] : rows) {
        std::snprintf(buf, sizeof(buf), "%-28s %7zu %8.1f %9.4f %9.4f %10.0f %11.2f %9.4f\n",
                      name.c_str(), s.frames, 100.0 * s.cloud_fraction, s.mean_reuse,
                      s.mean_compute, s.mean_tx_bytes, s.mean_t_realized, s.mean_fidelity);
        out += buf;
    }
    return out;
}

}  // namespace fluxshard

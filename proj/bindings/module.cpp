#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fluxshard/calibration.hpp"
#include "fluxshard/datagen.hpp"
#include "fluxshard/motion.hpp"
#include "fluxshard/pipeline.hpp"
#include "fluxshard/refnet.hpp"
#include "fluxshard/reuse.hpp"
#include "fluxshard/server.hpp"
#include "fluxshard/tensor.hpp"
#include "fluxshard/wire.hpp"

namespace py = pybind11;
using namespace fluxshard;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FeatureMap map_from_array(const FloatArray& arr) {
    if (arr.ndim() != 3) throw std::invalid_argument("expected an (h, w, c) float array");
    FeatureMap m(int(arr.shape(0)), int(arr.shape(1)), int(arr.shape(2)));
    std::memcpy(m.data.data(), arr.data(), m.data.size() * sizeof(float));
    return m;
}

py::array_t<float> array_from_map(const FeatureMap& m) {
    py::array_t<float> arr({m.h, m.w, m.c});
    std::memcpy(arr.mutable_data(), m.data.data(), m.data.size() * sizeof(float));
    return arr;
}

py::array_t<int16_t> array_from_field(const MVField& mv) {
    py::array_t<int16_t> arr({mv.grid_h, mv.grid_w, 2});
    auto a = arr.mutable_unchecked<3>();
    for (int i = 0; i < mv.grid_h; ++i)
        for (int j = 0; j < mv.grid_w; ++j) {
            a(i, j, 0) = mv.dy_at(i, j);
            a(i, j, 1) = mv.dx_at(i, j);
        }
    return arr;
}

ThresholdVector thresholds_from_args(const NetworkSpec& net, double tau0,
                                     const std::vector<float>& layer) {
    ThresholdVector tau = ThresholdVector::zeros(net.num_layers());
    tau.tau0 = float(tau0);
    if (!layer.empty()) {
        if (int(layer.size()) != net.num_layers())
            throw std::invalid_argument("layer thresholds must have one entry per layer");
        tau.layer = layer;
    }
    return tau;
}

PipelineOptions options_from_args(bool rfap, bool per_layer_rfap, bool remap, bool sparse) {
    PipelineOptions opt;
    opt.rfap = rfap;
    opt.per_layer_rfap = per_layer_rfap;
    opt.remap = remap;
    opt.sparse = sparse;
    return opt;
}

py::dict stats_to_dict(const FrameStats& s) {
    py::dict d;
    d["frame_id"] = s.frame_id;
    d["cold_start"] = s.cold_start;
    d["dispatch_count"] = s.s0_count;
    d["reuse_ratio"] = s.reuse_ratio;
    d["compute_ratio"] = s.compute_ratio;
    d["rfap_flagged"] = s.rfap_flagged;
    d["layer_counts"] = s.layer_counts;
    return d;
}

// Python-facing wrapper over NetworkSpec.
struct PyNetwork {
    NetworkSpec net;

    explicit PyNetwork(const std::string& text) : net(make_network(text)) {}

    static PyNetwork default_net() { return PyNetwork(default_network_text()); }

    py::tuple input_shape() const { return py::make_tuple(net.in_h, net.in_w, net.in_c); }
    int num_layers() const { return net.num_layers(); }
    uint64_t config_hash_() const { return net.config_hash(); }
    std::string text() const { return net.canonical_text(); }
    double dense_cost_() const { return dense_cost(net); }

    py::array_t<float> dense(const FloatArray& frame) const {
        return array_from_map(dense_forward(net, map_from_array(frame)).back());
    }
};

// Stateful single-stream sparse-inference session.
struct PySession {
    NetworkSpec net;
    ThresholdVector tau;
    PipelineOptions opt;
    int block_size;
    int search_radius;
    EndpointCache cache;
    FeatureMap prev;
    bool have_prev = false;
    uint64_t next_frame = 0;

    PySession(const PyNetwork& network, double tau0, std::vector<float> layer, bool rfap,
              bool per_layer_rfap, bool remap, bool sparse, int block, int radius)
        : net(network.net),
          tau(thresholds_from_args(net, tau0, layer)),
          opt(options_from_args(rfap, per_layer_rfap, remap, sparse)),
          block_size(block),
          search_radius(radius),
          cache(EndpointCache::make(net)) {}

    void reset() {
        cache = EndpointCache::make(net);
        have_prev = false;
        next_frame = 0;
    }

    py::tuple run(const FloatArray& frame_arr) {
        const FeatureMap frame = map_from_array(frame_arr);
        if (frame.h != net.in_h || frame.w != net.in_w || frame.c != net.in_c)
            throw std::invalid_argument("frame shape does not match the network input");

        MVField blocks(frame.h / block_size, frame.w / block_size, block_size);
        if (have_prev) blocks = estimate_mv(frame, prev, block_size, search_radius);
        cache.accum = accumulate(cache.accum, blocks);

        const RecomputeMask s0 =
            compute_dispatch_set(net, tau, opt, cache, frame, cache.accum);
        FrameResult r =
            sparse_forward(net, tau, opt, cache, frame, cache.accum, s0, next_frame++);

        prev = frame;
        have_prev = true;
        return py::make_tuple(array_from_map(r.output), stats_to_dict(r.stats));
    }
};

}  // namespace

PYBIND11_MODULE(_fluxshard, m) {
    m.doc() = "Motion-guided sparse CNN inference core";

    py::class_<PyNetwork>(m, "Network")
        .def(py::init<const std::string&>(), py::arg("text"))
        .def_static("default", &PyNetwork::default_net)
        .def_property_readonly("input_shape", &PyNetwork::input_shape)
        .def_property_readonly("num_layers", &PyNetwork::num_layers)
        .def_property_readonly("config_hash", &PyNetwork::config_hash_)
        .def_property_readonly("text", &PyNetwork::text)
        .def_property_readonly("dense_cost", &PyNetwork::dense_cost_)
        .def("dense", &PyNetwork::dense, py::arg("frame"));

    py::class_<PySession>(m, "Session")
        .def(py::init<const PyNetwork&, double, std::vector<float>, bool, bool, bool, bool, int,
                      int>(),
             py::arg("network"), py::arg("tau0") = 0.0,
             py::arg("layer_thresholds") = std::vector<float>{}, py::arg("rfap") = true,
             py::arg("per_layer_rfap") = false, py::arg("remap") = true, py::arg("sparse") = true,
             py::arg("block_size") = 16, py::arg("search_radius") = 8)
        .def("run", &PySession::run, py::arg("frame"))
        .def("reset", &PySession::reset);

    m.def("default_network_text", &default_network_text);

    m.def(
        "generate",
        [](const std::string& name, int frames, int h, int w, uint64_t seed, int dy, int dx,
           int fg_dy, int fg_dx, int jitter, int grow) {
            ScenarioSpec spec;
            spec.name = name;
            spec.frames = frames;
            spec.h = h;
            spec.w = w;
            spec.seed = seed;
            spec.dy = dy;
            spec.dx = dx;
            spec.fg_dy = fg_dy;
            spec.fg_dx = fg_dx;
            spec.jitter = jitter;
            spec.grow = grow;
            const GeneratedSequence seq = generate_scenario(spec);
            py::list frames_out, motion_out;
            for (const FeatureMap& f : seq.frames) frames_out.append(array_from_map(f));
            for (const MVField& mv : seq.true_motion) motion_out.append(array_from_field(mv));
            return py::make_tuple(frames_out, motion_out);
        },
        py::arg("name"), py::arg("frames"), py::arg("h") = 128, py::arg("w") = 128,
        py::arg("seed") = 1, py::arg("dy") = 0, py::arg("dx") = 0, py::arg("fg_dy") = 0,
        py::arg("fg_dx") = 0, py::arg("jitter") = 24, py::arg("grow") = 2);

    m.def(
        "estimate_motion",
        [](const FloatArray& cur, const FloatArray& prev, int block_size, int search_radius) {
            return array_from_field(
                estimate_mv(map_from_array(cur), map_from_array(prev), block_size, search_radius));
        },
        py::arg("cur"), py::arg("prev"), py::arg("block_size") = 16, py::arg("search_radius") = 8);

    m.def(
        "calibrate",
        [](const PyNetwork& network, const std::vector<std::vector<FloatArray>>& sequences,
           double alpha, double split_ratio, int search_radius) {
            CalibrationConfig cfg;
            cfg.alpha = alpha;
            cfg.split_ratio = split_ratio;
            cfg.search_radius = search_radius;
            for (const auto& seq : sequences) {
                std::vector<FeatureMap> frames;
                for (const auto& arr : seq) frames.push_back(map_from_array(arr));
                cfg.sequences.push_back(std::move(frames));
            }
            const CalibrationOutcome out = calibrate(network.net, cfg);
            py::dict d;
            d["tau0"] = out.thresholds.tau0;
            d["layer"] = out.thresholds.layer;
            d["fidelity"] = out.fidelity;
            d["compute_ratio"] = out.compute_ratio;
            d["evaluations"] = out.evaluations;
            d["stage_layers"] = out.stage_layers;
            return d;
        },
        py::arg("network"), py::arg("sequences"), py::arg("alpha") = 0.97,
        py::arg("split_ratio") = 2.0 / 3.0, py::arg("search_radius") = 8);

    m.def("metadata_fraction", &metadata_fraction, py::arg("h"), py::arg("w"),
          py::arg("block_size") = 16);
    m.def(
        "encoded_offload_size",
        [](int h, int w, size_t n_px, int block_size) {
            return encoded_offload_size(h, w, n_px, block_size);
        },
        py::arg("h"), py::arg("w"), py::arg("n_px"), py::arg("block_size") = 16);
    m.def(
        "session_hash",
        [](const PyNetwork& network, double tau0, const std::vector<float>& layer) {
            return session_hash(network.net, thresholds_from_args(network.net, tau0, layer));
        },
        py::arg("network"), py::arg("tau0") = 0.0,
        py::arg("layer_thresholds") = std::vector<float>{});
}

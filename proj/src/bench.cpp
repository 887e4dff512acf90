#include "capsnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

#include "capsnet/train.hpp"

namespace capsnet {

MachineInfo describe_machine() {
    MachineInfo m;
    m.logical_cpus = std::thread::hardware_concurrency();
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        std::string key = line.substr(0, colon);
        key.erase(key.find_last_not_of(" \t") + 1);
        std::string value = line.substr(colon + 1);
        value.erase(0, value.find_first_not_of(' '));
        if (key == "model name" && m.cpu_model.empty()) m.cpu_model = value;
        if (key == "cpu MHz" && m.cpu_mhz == 0) m.cpu_mhz = std::atof(value.c_str());
    }
    if (m.cpu_model.empty()) m.cpu_model = "unknown";
#if defined(__clang__)
    m.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
    m.compiler = "gcc " __VERSION__;
#else
    m.compiler = "unknown";
#endif
    return m;
}

double percentile(std::vector<double> v, double q) {
    if (v.empty()) throw ContractError("percentile of an empty list");
    if (!(q >= 0 && q <= 1)) throw ContractError("percentile rank must lie in [0, 1]");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

LatencyStats summarize_latency(std::vector<double> samples, std::size_t warmup) {
    if (samples.empty()) throw ContractError("latency benchmark needs at least one run");
    LatencyStats s;
    s.runs = samples.size();
    s.warmup = warmup;
    s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
    s.p50 = percentile(samples, 0.5);
    s.p95 = percentile(samples, 0.95);
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    s.min = *mn;
    s.max = *mx;
    // summation rounding can put the mean of identical samples a hair outside [min, max]
    s.mean = std::clamp(s.mean, s.min, s.max);
    s.samples = std::move(samples);
    return s;
}

namespace {

Tensor<float> bench_input(const Shape& shape, std::uint64_t seed) {
    Tensor<float> input(shape);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& v : input.storage()) v = u(rng);
    return input;
}

}  // namespace

std::vector<LatencyStats> benchmark_interleaved(const std::vector<const Model<float>*>& models, std::size_t n_runs,
                                                std::size_t warmup, std::uint64_t seed) {
    if (n_runs == 0) throw ContractError("latency benchmark needs at least one run");
    if (models.empty()) throw ContractError("nothing to benchmark");
    using clock = std::chrono::steady_clock;
    std::vector<Tensor<float>> inputs;
    for (const auto* m : models) inputs.push_back(bench_input(m->spec().input_shape, seed));

    std::size_t sink = 0;
    for (std::size_t i = 0; i < warmup; ++i)
        for (std::size_t k = 0; k < models.size(); ++k) sink += predict(*models[k], inputs[k]).label;
    std::vector<std::vector<double>> times(models.size());
    for (std::size_t i = 0; i < n_runs; ++i)
        for (std::size_t k = 0; k < models.size(); ++k) {
            const auto t0 = clock::now();
            sink += predict(*models[k], inputs[k]).label;
            times[k].push_back(std::chrono::duration<double>(clock::now() - t0).count());
        }
    [[maybe_unused]] volatile std::size_t keep = sink;
    const MachineInfo machine = describe_machine();
    std::vector<LatencyStats> out;
    for (auto& t : times) {
        out.push_back(summarize_latency(std::move(t), warmup));
        out.back().machine = machine;
    }
    return out;
}

LatencyStats benchmark_latency(const Model<float>& model, std::size_t n_runs, std::size_t warmup, std::uint64_t seed) {
    return benchmark_interleaved({&model}, n_runs, warmup, seed).front();
}

std::string to_json(const LatencyStats& s) {
    nlohmann::ordered_json j;
    j["runs"] = s.runs;
    j["warmup"] = s.warmup;
    j["mean_s"] = s.mean;
    j["p50_s"] = s.p50;
    j["p95_s"] = s.p95;
    j["min_s"] = s.min;
    j["max_s"] = s.max;
    j["machine"] = {{"cpu_model", s.machine.cpu_model},
                    {"cpu_mhz", s.machine.cpu_mhz},
                    {"logical_cpus", s.machine.logical_cpus},
                    {"compiler", s.machine.compiler},
                    {"threads", 1}};
    return j.dump(2);
}

}  // namespace capsnet

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capsnet/model.hpp"

namespace capsnet {

struct MachineInfo {
    std::string cpu_model;
    double cpu_mhz = 0;
    unsigned logical_cpus = 0;
    std::string compiler;
};

MachineInfo describe_machine();

struct LatencyStats {
    std::size_t runs = 0;
    std::size_t warmup = 0;
    double mean = 0, p50 = 0, p95 = 0, min = 0, max = 0;  // seconds
    std::vector<double> samples;
    MachineInfo machine;
};

/// Linear interpolation between closest ranks; q in [0, 1].
double percentile(std::vector<double> values, double q);

/// Summary of raw timings; throws ContractError on an empty list.
LatencyStats summarize_latency(std::vector<double> samples, std::size_t warmup = 0);

/// Times single-image predictions on the calling thread after `warmup`
/// unmeasured runs. The input is a fixed random image in [0,1].
LatencyStats benchmark_latency(const Model<float>& model, std::size_t n_runs, std::size_t warmup,
                               std::uint64_t seed = 0);

/// Same protocol for several models with their runs interleaved (run i of
/// every model before run i+1 of any), so drift in machine load hits all of
/// them alike. One LatencyStats per model, in input order.
std::vector<LatencyStats> benchmark_interleaved(const std::vector<const Model<float>*>& models, std::size_t n_runs,
                                                std::size_t warmup, std::uint64_t seed = 0);

std::string to_json(const LatencyStats& stats);

}  // namespace capsnet

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "capsnet/tape.hpp"

namespace capsnet {

struct GradcheckOptions {
    std::size_t trials = 20;
    std::uint64_t seed = 0;
    double eps = 1e-6;
    double tolerance = 1e-4;
    /// Elements probed per tensor per trial; 0 probes every element.
    std::size_t max_elements = 32;
    /// Negative control: scale the upstream gradient of one op kind.
    std::optional<std::pair<OpKind, double>> corrupt;
};

struct GradcheckGroup {
    std::string name;
    double max_rel_error = 0;
    std::size_t checked = 0;
    bool pass = true;
};

struct GradcheckReport {
    std::string target;
    std::size_t trials = 0;
    double tolerance = 0;
    std::vector<GradcheckGroup> groups;
    /// Groups are layers in forward order, so errors propagate from later
    /// groups to earlier ones.
    bool ordered = false;

    bool pass() const;
    /// Names of the groups over tolerance.
    std::vector<std::string> failures() const;
    /// For ordered reports, the failing group nearest the loss: where the
    /// backward pass first goes wrong. Empty when passing.
    std::string offending() const;
    std::string to_text() const;
};

/// |a - n| / max(|a|, |n|, 1e-3): relative where gradients are large, absolute
/// below 1e-3 so values that are zero up to rounding do not divide by zero.
double grad_rel_error(double analytic, double numeric);

/// Layer kinds checked in isolation: conv2d, maxpool, dense, squash, routing,
/// margin_loss, decoder, lstm_cell.
GradcheckReport gradcheck_layers(const GradcheckOptions& opt = {});

/// End-to-end loss gradient of a downscaled clone. Accepts a zoo name
/// ("capsule32-v1") or its clone name ("tiny-capsule32-v1"). Groups are the
/// parameterized layers, named "<index>.<kind>".
GradcheckReport gradcheck_model(std::string_view name, const GradcheckOptions& opt = {});

/// "layers" or a model name, as accepted by the CLI.
GradcheckReport gradcheck(std::string_view target, const GradcheckOptions& opt = {});

/// Targets covered by the full gradient suite.
std::vector<std::string> gradcheck_targets();

}  // namespace capsnet

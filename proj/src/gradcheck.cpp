#include "capsnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>

#include "capsnet/augment.hpp"
#include "capsnet/capsule.hpp"
#include "capsnet/model.hpp"
#include "capsnet/objective.hpp"
#include "capsnet/ops.hpp"

namespace capsnet {

bool GradcheckReport::pass() const {
    return std::all_of(groups.begin(), groups.end(), [](const GradcheckGroup& g) { return g.pass; });
}

std::vector<std::string> GradcheckReport::failures() const {
    std::vector<std::string> out;
    for (const auto& g : groups)
        if (!g.pass) out.push_back(g.name);
    return out;
}

std::string GradcheckReport::offending() const {
    const auto f = failures();
    if (f.empty()) return {};
    return ordered ? f.back() : f.front();
}

std::string GradcheckReport::to_text() const {
    std::string s = "gradcheck " + target + " (" + std::to_string(trials) + " trials, tolerance " +
                    std::to_string(tolerance) + ")\n";
    char line[160];
    for (const auto& g : groups) {
        std::snprintf(line, sizeof line, "  %-22s max_rel_err %.3e  checked %6zu  %s\n", g.name.c_str(),
                      g.max_rel_error, g.checked, g.pass ? "PASS" : "FAIL");
        s += line;
    }
    s += pass() ? "PASS\n" : "FAIL: " + [&] {
        std::string names;
        for (const auto& n : failures()) names += (names.empty() ? "" : ", ") + n;
        if (ordered) names += " (backward pass first diverges at " + offending() + ")";
        return names;
    }() + "\n";
    return s;
}

double grad_rel_error(double a, double n) {
    const double denom = std::max({std::abs(a), std::abs(n), 1e-3});
    return std::abs(a - n) / denom;
}

namespace {

using Rng = std::mt19937_64;
using TensorList = std::vector<Tensor<double>>;
using Build = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo = -1, double hi = 1) {
    Tensor<double> t(shape);
    for (auto& v : t.storage()) v = lo + (hi - lo) * uniform01(rng);
    return t;
}

std::size_t pick(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

std::vector<std::size_t> probe_indices(std::size_t n, std::size_t max_elements, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (max_elements == 0 || n <= max_elements) return idx;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_elements);
    return idx;
}

void record(GradcheckGroup& g, double analytic, double numeric, double tol) {
    const double e = grad_rel_error(analytic, numeric);
    g.max_rel_error = std::max(g.max_rel_error, std::isfinite(e) ? e : INFINITY);
    ++g.checked;
    if (!(e < tol)) g.pass = false;
}

/// Scalar projection <v, w> with a fixed random w, so every output element
/// receives a distinct upstream gradient.
Var project(Tape<double>& tape, Var v, const Tensor<double>& w) {
    return ops::sum(tape, ops::mul(tape, v, tape.constant(w)));
}

void check_case(GradcheckGroup& g, const TensorList& inputs, const Build& build, const GradcheckOptions& opt,
                Rng& rng) {
    Tape<double> tape;
    if (opt.corrupt) tape.corrupt(opt.corrupt->first, opt.corrupt->second);
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.leaf(t));
    const Var loss = build(tape, vars);
    tape.backward(loss);

    TensorList probe = inputs;
    auto eval = [&] {
        Tape<double> t(false);
        std::vector<Var> vs;
        for (const auto& x : probe) vs.push_back(t.constant(x));
        return t.value(build(t, vs))[0];
    };
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor<double> grad = tape.grad(vars[i]);
        for (std::size_t k : probe_indices(inputs[i].size(), opt.max_elements, rng)) {
            const double orig = probe[i][k];
            probe[i][k] = orig + opt.eps;
            const double up = eval();
            probe[i][k] = orig - opt.eps;
            const double down = eval();
            probe[i][k] = orig;
            record(g, grad[k], (up - down) / (2 * opt.eps), opt.tolerance);
        }
    }
}

void conv_case(GradcheckGroup& g, const GradcheckOptions& opt, std::size_t trial, Rng& rng) {
    const std::size_t C = 1 + pick(rng, 3), side = 4 + pick(rng, 4), F = 1 + pick(rng, 3);
    const std::size_t k = 1 + pick(rng, 3), stride = 1 + pick(rng, 2);
    const Padding pad = trial % 2 ? Padding::same : Padding::valid;
    TensorList in{random_tensor({C, side, side}, rng), random_tensor({F, C, k, k}, rng), random_tensor({F}, rng)};
    const auto geo = conv_geometry(in[0].shape(), in[1].shape(), stride, pad);
    const Tensor<double> w = random_tensor({F, geo.rows.out, geo.cols.out}, rng);
    check_case(g, in,
               [&](Tape<double>& t, const std::vector<Var>& v) {
                   return project(t, ops::conv2d(t, v[0], v[1], v[2], stride, pad), w);
               },
               opt, rng);
}

void maxpool_case(GradcheckGroup& g, const GradcheckOptions& opt, Rng& rng) {
    const std::size_t C = 1 + pick(rng, 3), H = 2 * (1 + pick(rng, 3)), W = 2 * (1 + pick(rng, 3));
    TensorList in{random_tensor({C, H, W}, rng)};
    const Tensor<double> w = random_tensor({C, H / 2, W / 2}, rng);
    check_case(g, in, [&](Tape<double>& t, const std::vector<Var>& v) { return project(t, ops::maxpool2(t, v[0]), w); },
               opt, rng);
}

void dense_case(GradcheckGroup& g, const GradcheckOptions& opt, std::size_t trial, Rng& rng) {
    const std::size_t n_in = 2 + pick(rng, 8), n_out = 2 + pick(rng, 5);
    const Activation act = static_cast<Activation>(trial % 4);
    TensorList in{random_tensor({n_in}, rng), random_tensor({n_out, n_in}, rng), random_tensor({n_out}, rng)};
    const Tensor<double> w = random_tensor({n_out}, rng);
    const std::size_t label = pick(rng, n_out);
    const bool head = trial % 3 == 2;
    check_case(g, in,
               [&](Tape<double>& t, const std::vector<Var>& v) {
                   const Var z = ops::dense(t, v[0], v[1], v[2]);
                   if (head) return ops::cross_entropy(t, z, label);
                   return project(t, ops::activation(t, z, act), w);
               },
               opt, rng);
}

void squash_case(GradcheckGroup& g, const GradcheckOptions& opt, Rng& rng) {
    const std::size_t n = 1 + pick(rng, 5), d = 1 + pick(rng, 6);
    const double scale = std::pow(10.0, -1.0 + 2.0 * uniform01(rng));
    TensorList in{random_tensor({n, d}, rng, -scale, scale)};
    const Tensor<double> w = random_tensor({n, d}, rng);
    check_case(g, in, [&](Tape<double>& t, const std::vector<Var>& v) { return project(t, ops::squash(t, v[0]), w); },
               opt, rng);
}

void routing_case(GradcheckGroup& g, const GradcheckOptions& opt, std::size_t trial, Rng& rng) {
    const std::size_t n_in = 2 + pick(rng, 5), d_in = 1 + pick(rng, 4), n_out = 2 + pick(rng, 3),
                      d_out = 1 + pick(rng, 4);
    const int iters = 1 + static_cast<int>(trial % 3);
    TensorList in{random_tensor({n_in, d_in}, rng), random_tensor({n_in, n_out, d_out, d_in}, rng)};
    const Tensor<double> w = random_tensor({n_out, d_out}, rng);
    check_case(g, in,
               [&](Tape<double>& t, const std::vector<Var>& v) {
                   const auto r = ops::dynamic_routing(t, ops::votes(t, v[0], v[1]), iters);
                   return project(t, r.outputs, w);
               },
               opt, rng);
}

void margin_case(GradcheckGroup& g, const GradcheckOptions& opt, Rng& rng) {
    const std::size_t n = 2 + pick(rng, 6), d = 2 + pick(rng, 4);
    TensorList in{random_tensor({n, d}, rng, -0.8, 0.8)};
    const std::size_t label = pick(rng, n);
    check_case(g, in,
               [&](Tape<double>& t, const std::vector<Var>& v) {
                   return ops::margin_loss(t, ops::row_norms(t, v[0]), label);
               },
               opt, rng);
}

void decoder_case(GradcheckGroup& g, const GradcheckOptions& opt, Rng& rng) {
    const std::size_t n = 2 + pick(rng, 3), d = 2 + pick(rng, 3), side = 2 + pick(rng, 3), hidden = 3 + pick(rng, 5);
    const DecoderSpec spec{{hidden, side * side}, side};
    TensorList in{random_tensor({n, d}, rng),
                  random_tensor({hidden, n * d}, rng),
                  random_tensor({hidden}, rng),
                  random_tensor({side * side, hidden}, rng),
                  random_tensor({side * side}, rng)};
    const Tensor<double> target = random_tensor({side, side}, rng, 0, 1);
    const std::size_t selected = pick(rng, n);
    check_case(g, in,
               [&](Tape<double>& t, const std::vector<Var>& v) {
                   const Var masked = ops::mask_class_capsules(t, v[0], selected);
                   const Var recon = ops::decode(t, masked, spec, {v[1], v[2], v[3], v[4]});
                   return ops::reconstruction_loss(t, target, recon);
               },
               opt, rng);
}

void lstm_case(GradcheckGroup& g, const GradcheckOptions& opt, Rng& rng) {
    const std::size_t d = 1 + pick(rng, 5), u = 1 + pick(rng, 4);
    TensorList in{random_tensor({d}, rng), random_tensor({u}, rng), random_tensor({u}, rng)};
    for (int k = 0; k < 4; ++k) in.push_back(random_tensor({u, d + u}, rng));
    for (int k = 0; k < 4; ++k) in.push_back(random_tensor({u}, rng));
    const Tensor<double> wh = random_tensor({u}, rng), wc = random_tensor({u}, rng);
    check_case(g, in,
               [&](Tape<double>& t, const std::vector<Var>& v) {
                   const LstmVars<double> p{v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
                   const auto [h, c] = lstm_step(t, v[0], v[1], v[2], p);
                   return ops::add(t, project(t, h, wh), project(t, c, wc));
               },
               opt, rng);
}

std::string strip_tiny(std::string_view name) {
    constexpr std::string_view prefix = "tiny-";
    if (name.substr(0, prefix.size()) == prefix) name.remove_prefix(prefix.size());
    return std::string(name);
}

}  // namespace

GradcheckReport gradcheck_layers(const GradcheckOptions& opt) {
    if (opt.trials == 0) throw ContractError("gradcheck needs at least one trial");
    GradcheckReport rep{"layers", opt.trials, opt.tolerance, {}};
    const char* names[] = {"conv2d", "maxpool", "dense", "squash", "routing", "margin_loss", "decoder", "lstm_cell"};
    for (const char* n : names) rep.groups.push_back({n});
    Rng rng(derive_seed(opt.seed, 0x6C61));
    for (std::size_t t = 0; t < opt.trials; ++t) {
        conv_case(rep.groups[0], opt, t, rng);
        maxpool_case(rep.groups[1], opt, rng);
        dense_case(rep.groups[2], opt, t, rng);
        squash_case(rep.groups[3], opt, rng);
        routing_case(rep.groups[4], opt, t, rng);
        margin_case(rep.groups[5], opt, rng);
        decoder_case(rep.groups[6], opt, rng);
        lstm_case(rep.groups[7], opt, rng);
    }
    return rep;
}

GradcheckReport gradcheck_model(std::string_view name, const GradcheckOptions& opt) {
    if (opt.trials == 0) throw ContractError("gradcheck needs at least one trial");
    const ModelSpec spec = tiny_clone(strip_tiny(name));
    GradcheckReport rep{spec.name, opt.trials, opt.tolerance, {}, true};

    const auto layout = parameter_layout(spec);
    std::map<std::size_t, std::size_t> group_of_layer;
    std::vector<std::size_t> group_of_param;
    for (const auto& p : layout) {
        auto [it, fresh] = group_of_layer.try_emplace(p.layer, rep.groups.size());
        if (fresh) rep.groups.push_back({std::to_string(p.layer) + "." + std::string(to_string(p.kind))});
        group_of_param.push_back(it->second);
    }

    LossOptions loss_opt;
    loss_opt.recon_weight = 0.1;  // large enough that decoder gradients clear the 1e-3 floor
    Rng rng(derive_seed(opt.seed, 0x6D6F));
    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
        Model<double> m = Model<double>::initialized(spec, derive_seed(opt.seed, trial));
        for (std::size_t k = 0; k < layout.size(); ++k)
            if (layout[k].shape.size() == 1)
                for (auto& v : m.params()[k].storage()) v = -0.1 + 0.2 * uniform01(rng);
        const Tensor<double> x = random_tensor(spec.input_shape, rng, 0, 1);
        const std::size_t label = pick(rng, spec.n_classes);

        Tape<double> tape;
        if (opt.corrupt) tape.corrupt(opt.corrupt->first, opt.corrupt->second);
        m.zero_grad();
        tape.backward(m.loss(tape, x, label, loss_opt));
        const std::vector<Tensor<double>> grads = m.grads();

        auto eval = [&] {
            Tape<double> t(false);
            return t.value(m.loss(t, x, label, loss_opt))[0];
        };
        for (std::size_t k = 0; k < layout.size(); ++k) {
            auto& p = m.params()[k];
            for (std::size_t i : probe_indices(p.size(), opt.max_elements, rng)) {
                const double orig = p[i];
                p[i] = orig + opt.eps;
                const double up = eval();
                p[i] = orig - opt.eps;
                const double down = eval();
                p[i] = orig;
                record(rep.groups[group_of_param[k]], grads[k][i], (up - down) / (2 * opt.eps), opt.tolerance);
            }
        }
    }
    return rep;
}

GradcheckReport gradcheck(std::string_view target, const GradcheckOptions& opt) {
    if (target == "layers") return gradcheck_layers(opt);
    return gradcheck_model(target, opt);
}

std::vector<std::string> gradcheck_targets() {
    return {"layers", "tiny-capsule32-v1", "tiny-capsule32-v2", "tiny-baseline-convnet", "tiny-mlp-head",
            "tiny-lstm-head"};
}

}  // namespace capsnet

#include "capsnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

namespace capsnet {

void TrainConfig::validate() const {
    if (epochs == 0) throw ContractError("epochs must be positive");
    if (batch_size == 0) throw ContractError("batch size must be positive");
    if (!(learning_rate > 0)) throw ContractError("learning rate must be positive");
    if (!(dataset_fraction > 0 && dataset_fraction <= 1)) throw ContractError("dataset fraction must lie in (0, 1]");
    if (routing_iterations && *routing_iterations < 1) throw ContractError("routing needs at least one iteration");
    if (augment) augment->validate();
}

std::string to_jsonl(const EpochReport& r) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["train_accuracy"] = r.train_accuracy;
    j["test_accuracy"] = r.test_accuracy ? nlohmann::ordered_json(*r.test_accuracy) : nlohmann::ordered_json();
    j["seconds"] = r.seconds;
    j["steps"] = r.steps;
    return j.dump();
}

ModelSpec with_routing_iterations(ModelSpec spec, std::optional<int> iterations) {
    if (!iterations) return spec;
    if (*iterations < 1) throw ContractError("routing needs at least one iteration");
    for (auto& l : spec.layers)
        if (l.kind == LayerKind::class_caps) l.routing_iterations = *iterations;
    return spec;
}

void check_finite(const Model<float>& model, const std::string& when) {
    for (std::size_t k = 0; k < model.params().size(); ++k)
        if (!model.params()[k].all_finite())
            throw NumericError("parameter '" + model.layout()[k].name + "' became non-finite " + when);
}

namespace {

std::size_t argmax(std::span<const float> s) {
    return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
}

void check_compatible(const ModelSpec& spec, const Dataset& data, const char* which) {
    if (data.empty()) return;
    if (data.sample_shape() != spec.input_shape)
        throw ShapeError(std::string(which) + " samples are " + shape_str(data.sample_shape()) + " but '" + spec.name +
                         "' expects " + shape_str(spec.input_shape));
    for (const auto& s : data.samples)
        if (s.label >= spec.n_classes)
            throw DataError(std::string(which) + " label " + std::to_string(s.label) + " exceeds the model's " +
                            std::to_string(spec.n_classes) + " classes");
}

}  // namespace

Prediction predict(const Model<float>& model, const Tensor<float>& input) {
    Tape<float> tape(false);
    const auto out = model.infer(tape, input);
    const auto s = tape.value(out.scores).data();
    Prediction p;
    p.label = argmax(s);
    p.confidence = s[p.label];
    p.scores.assign(s.begin(), s.end());
    return p;
}

double evaluate(const Model<float>& model, const Dataset& data) {
    if (data.empty()) throw DataError("cannot evaluate on an empty dataset");
    std::size_t correct = 0;
    for (const auto& s : data.samples) correct += predict(model, s.x).label == s.label;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(const ModelSpec& spec_in, const Dataset& train_in, const Dataset& test_set, const TrainConfig& cfg,
                  const std::function<void(const EpochReport&)>& on_epoch) {
    using clock = std::chrono::steady_clock;
    cfg.validate();
    const ModelSpec spec = with_routing_iterations(spec_in, cfg.routing_iterations);
    validate(spec);
    if (train_in.empty()) throw DataError("training set is empty");
    check_compatible(spec, train_in, "training");
    check_compatible(spec, test_set, "test");
    const Dataset train_set = select_fraction(train_in, cfg.dataset_fraction, derive_seed(cfg.seed, 0xF4AC));
    if (train_set.empty()) throw DataError("dataset fraction left no training samples");
    if (cfg.augment && spec.input_shape.size() != 3) throw ContractError("augmentation applies to image models only");

    Model<float> model = Model<float>::initialized(spec, cfg.seed);
    Optimizer<float> opt(cfg.optimizer, cfg.learning_rate);
    LossOptions loss_opt;
    loss_opt.recon_weight = cfg.recon_weight;

    std::vector<std::size_t> order(train_set.size());
    std::vector<EpochReport> reports;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = clock::now();
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        EpochReport rep;
        rep.epoch = epoch;
        double loss_sum = 0;
        std::size_t running_correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            model.zero_grad();
            for (std::size_t pos = start; pos < end; ++pos) {
                const Sample& raw = train_set.samples[order[pos]];
                Tensor<float> x = raw.x;
                if (cfg.augment) {
                    std::mt19937_64 rng(derive_seed(cfg.seed, epoch, pos + 1));
                    x = augment(raw, *cfg.augment, rng).x;
                }
                Tape<float> tape;
                ForwardOutputs<float> out;
                const Var loss = model.loss(tape, x, raw.label, loss_opt, &out);
                const float lv = tape.value(loss)[0];
                if (!std::isfinite(lv))
                    throw NumericError("loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(opt.steps() + 1));
                loss_sum += lv;
                running_correct += argmax(tape.value(out.scores).data()) == raw.label;
                tape.backward(loss);
            }
            const float inv = 1.0f / static_cast<float>(end - start);
            for (std::size_t k = 0; k < model.grads().size(); ++k) {
                auto& g = model.grads()[k];
                for (auto& v : g.storage()) v *= inv;
                if (!g.all_finite())
                    throw NumericError("gradient of '" + model.layout()[k].name + "' became non-finite at epoch " +
                                       std::to_string(epoch));
            }
            opt.step(model.params(), model.grads());
            ++rep.steps;
            check_finite(model, "after optimizer step " + std::to_string(opt.steps()));
        }
        rep.train_loss = loss_sum / static_cast<double>(train_set.size());
        rep.train_accuracy = cfg.clean_train_accuracy
                                 ? evaluate(model, train_set)
                                 : static_cast<double>(running_correct) / static_cast<double>(train_set.size());
        if (!test_set.empty()) rep.test_accuracy = evaluate(model, test_set);
        rep.seconds = std::chrono::duration<double>(clock::now() - t0).count();
        reports.push_back(rep);
        if (on_epoch) on_epoch(rep);
        const double watched = rep.test_accuracy.value_or(rep.train_accuracy);
        if (cfg.stop_at_accuracy && watched >= *cfg.stop_at_accuracy) break;
    }
    model.zero_grad();
    WeightArchive archive = make_archive(model, train_in.class_names, cfg.seed);
    return {std::move(model), std::move(reports), std::move(archive)};
}

}  // namespace capsnet

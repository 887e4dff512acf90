// capsnet command-line front end: train, eval, predict, bench, gradcheck,
// dataset pack.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "capsnet/archive.hpp"
#include "capsnet/bench.hpp"
#include "capsnet/data.hpp"
#include "capsnet/gradcheck.hpp"
#include "capsnet/image_io.hpp"
#include "capsnet/train.hpp"

using namespace capsnet;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

class UsageError : public Error {
public:
    using Error::Error;
};

bool is_head(const ModelSpec& spec) { return spec.input_shape.size() == 1; }
bool is_head_name(const std::string& name) { return name == "mlp-head" || name == "lstm-head"; }

Dataset load_for_spec(const std::string& path, const ModelSpec& spec) {
    if (is_head(spec)) return feature_dataset(load_feature_dataset(path));
    return load_image_dataset(path, spec.input_shape[1], spec.input_shape[0]);
}

OpKind parse_op_kind(const std::string& s) {
    for (int k = 0; k <= static_cast<int>(OpKind::margin_loss); ++k)
        if (to_string(static_cast<OpKind>(k)) == s) return static_cast<OpKind>(k);
    throw UsageError("unknown op kind '" + s + "'");
}

struct TrainArgs {
    std::string model, data, out, report, augment = "on", optimizer = "adam";
    std::size_t epochs = 0, batch = 16, channels = 3, side = 64;
    double lr = 1e-3, fraction = 1.0, test_frac = 0.3, recon_weight = -1;
    std::uint64_t seed = 0;
    int routing = 0;
};

int run_train(const TrainArgs& a) {
    TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.learning_rate = a.lr;
    cfg.optimizer = parse_optimizer(a.optimizer);
    cfg.seed = a.seed;
    cfg.dataset_fraction = a.fraction;
    cfg.recon_weight = a.recon_weight;
    if (a.routing > 0) cfg.routing_iterations = a.routing;
    if (a.augment == "on" && !is_head_name(a.model)) cfg.augment = AugmentConfig{};
    cfg.validate();
    if (!(a.test_frac > 0 && a.test_frac < 1)) throw UsageError("--test-split must lie in (0, 1)");

    Dataset data;
    ZooInputs zin;
    zin.channels = a.channels;
    zin.side = a.side;
    if (is_head_name(a.model)) {
        data = feature_dataset(load_feature_dataset(a.data));
        if (data.empty()) throw DataError("feature file '" + a.data + "' holds no records");
        zin.feature_len = data.sample_shape()[0];
    } else {
        data = load_image_dataset(a.data, native_input_side(a.model, a.side), a.channels);
    }
    zin.n_classes = data.n_classes();
    const ModelSpec spec = build_named_model(a.model, zin);
    auto [train_set, test_set] = split_train_test(data, 1.0 - a.test_frac, a.seed);
    std::cout << spec.name << ": " << parameter_count(spec) << " parameters, " << train_set.size() << " train / "
              << test_set.size() << " test samples\n";

    std::ofstream report;
    if (!a.report.empty()) {
        report.open(a.report);
        if (!report) throw DataError("cannot create report '" + a.report + "'");
    }
    TrainResult res = train(spec, train_set, test_set, cfg, [&](const EpochReport& r) {
        std::printf("epoch %zu  loss %.5f  train_acc %.4f  test_acc %.4f  %.1fs\n", r.epoch, r.train_loss,
                    r.train_accuracy, r.test_accuracy.value_or(-1.0), r.seconds);
        std::fflush(stdout);
        if (report) report << to_jsonl(r) << '\n' << std::flush;
    });
    save_weights(a.out, res.archive);
    std::cout << "saved " << a.out << '\n';
    return kOk;
}

int run_eval(const std::string& weights, const std::string& data_path) {
    const WeightArchive archive = read_archive(weights);
    const Model<float> model = model_from_archive(archive);
    const Dataset data = load_for_spec(data_path, model.spec());
    const double acc = evaluate(model, data);
    std::printf("accuracy %.6f (%zu samples)\n", acc, data.size());
    return kOk;
}

int run_predict(const std::string& weights, const std::string& image) {
    const WeightArchive archive = read_archive(weights);
    const Model<float> model = model_from_archive(archive);
    const Shape& in = model.spec().input_shape;
    if (is_head(model.spec())) throw UsageError("predict takes images; '" + archive.model_name + "' is a feature head");
    Tensor<float> x = convert_channels(rescale_u8(read_pnm(image)), in[0]);
    x = resize_bilinear(x, in[1], in[2]);
    const Prediction p = predict(model, x);
    const std::string name =
        p.label < archive.class_names.size() ? archive.class_names[p.label] : std::to_string(p.label);
    std::printf("%s %.6f\n", name.c_str(), p.confidence);
    return kOk;
}

int run_bench(const std::vector<std::string>& weights, const std::vector<std::string>& model_names, std::size_t runs,
              std::size_t warmup, std::size_t n_classes, std::size_t channels) {
    if (runs == 0) throw UsageError("--runs must be at least 1");
    std::vector<Model<float>> models;
    std::vector<std::string> labels;
    for (const auto& w : weights) {
        models.push_back(model_from_archive(read_archive(w)));
        labels.push_back(w);
    }
    for (const auto& name : model_names) {
        ZooInputs zin;
        zin.n_classes = n_classes;
        zin.channels = channels;
        models.push_back(Model<float>::initialized(build_named_model(name, zin), 0));
        labels.push_back(name);
    }
    if (models.empty()) throw UsageError("bench needs --weights or --model");
    std::vector<const Model<float>*> ptrs;
    for (const auto& m : models) ptrs.push_back(&m);
    const auto stats = benchmark_interleaved(ptrs, runs, warmup);
    for (std::size_t k = 0; k < stats.size(); ++k) {
        if (stats.size() > 1) std::cout << "# " << labels[k] << '\n';
        std::cout << to_json(stats[k]) << '\n';
    }
    return kOk;
}

int run_gradcheck(const std::string& target, std::size_t trials, std::uint64_t seed, const std::string& corrupt) {
    GradcheckOptions opt;
    opt.trials = trials;
    opt.seed = seed;
    if (!corrupt.empty()) opt.corrupt = std::make_pair(parse_op_kind(corrupt), 1.5);
    std::vector<std::string> targets = target == "all" ? gradcheck_targets() : std::vector<std::string>{target};
    bool ok = true;
    for (const auto& t : targets) {
        const GradcheckReport rep = gradcheck(t, opt);
        std::cout << rep.to_text();
        ok = ok && rep.pass();
    }
    return ok ? kOk : kNumeric;
}

int run_pack(const std::string& in, const std::string& out, std::size_t side, std::size_t channels) {
    if (side == 0) throw UsageError("--side must be positive");
    const Dataset data = load_image_dataset(in, side, channels);
    write_packed_dataset(out, data);
    std::cout << "packed " << data.size() << " images of " << shape_str(data.sample_shape()) << " in "
              << data.n_classes() << " classes into " << out << '\n';
    for (std::size_t c = 0; c < data.n_classes(); ++c) std::cout << "  " << c << " = " << data.class_names[c] << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Capsule network training, evaluation and benchmarking"};
    app.require_subcommand(1);
    std::string model_help = "model name:";
    for (const auto& n : zoo_model_names()) model_help += " " + n;

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "train a model and write a weight archive");
    train_cmd->add_option("--model", ta.model, model_help)->required()->check(CLI::IsMember(zoo_model_names()));
    train_cmd->add_option("--data", ta.data, "image directory, packed .capd file, or FEAT file for heads")->required();
    train_cmd->add_option("--epochs", ta.epochs, "number of epochs")->required()->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", ta.batch, "mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", ta.lr, "learning rate")->capture_default_str();
    train_cmd->add_option("--seed", ta.seed, "seed for init, split, shuffling and augmentation")->capture_default_str();
    train_cmd->add_option("--fraction", ta.fraction, "stratified fraction of the training split to use")
        ->capture_default_str();
    train_cmd->add_option("--augment", ta.augment, "on|off")->capture_default_str()->check(CLI::IsMember({"on", "off"}));
    train_cmd->add_option("--optimizer", ta.optimizer, "adam|sgd")->capture_default_str();
    train_cmd->add_option("--routing", ta.routing, "routing iterations (default: the model's)");
    train_cmd->add_option("--recon-weight", ta.recon_weight, "reconstruction loss weight (default 0.0005*pixels/784)");
    train_cmd->add_option("--test-split", ta.test_frac, "held-out fraction per class")->capture_default_str();
    train_cmd->add_option("--channels", ta.channels, "image channels fed to the model")->capture_default_str();
    train_cmd->add_option("--side", ta.side, "input side for baseline-convnet")->capture_default_str();
    train_cmd->add_option("--out", ta.out, "weight archive to write")->required();
    train_cmd->add_option("--report", ta.report, "JSON-lines epoch report");

    std::string weights, data_path, image, target = "all", corrupt, pack_in, pack_out;
    std::vector<std::string> bench_weights, bench_models;
    std::size_t runs = 30, warmup = 5, trials = 20, side = 0, channels = 0, bench_channels = 3, n_classes = 29;
    std::uint64_t seed = 0;

    auto* eval_cmd = app.add_subcommand("eval", "accuracy of a trained model on a dataset");
    eval_cmd->add_option("--weights", weights, "weight archive")->required();
    eval_cmd->add_option("--data", data_path, "image directory, packed file, or FEAT file")->required();

    auto* predict_cmd = app.add_subcommand("predict", "classify one PGM/PPM image");
    predict_cmd->add_option("--weights", weights, "weight archive")->required();
    predict_cmd->add_option("--image", image, "image file")->required();

    auto* bench_cmd = app.add_subcommand("bench", "single-image prediction latency");
    bench_cmd->add_option("--weights", bench_weights, "weight archive; repeat to compare (runs are interleaved)");
    bench_cmd->add_option("--model", bench_models, "untrained zoo model instead of an archive; repeatable")
        ->check(CLI::IsMember(zoo_model_names()));
    bench_cmd->add_option("--runs", runs, "timed runs")->capture_default_str();
    bench_cmd->add_option("--warmup", warmup, "unmeasured runs")->capture_default_str();
    bench_cmd->add_option("--classes", n_classes, "classes for --model")->capture_default_str();
    bench_cmd->add_option("--channels", bench_channels, "channels for --model")->capture_default_str();

    auto* grad_cmd = app.add_subcommand("gradcheck", "compare backward gradients with finite differences");
    grad_cmd->add_option("--model", target, "layers, a tiny clone (tiny-capsule32-v1, ...), or all")
        ->capture_default_str();
    grad_cmd->add_option("--trials", trials, "random draws")->capture_default_str()->check(CLI::PositiveNumber);
    grad_cmd->add_option("--seed", seed, "seed")->capture_default_str();
    grad_cmd->add_option("--corrupt", corrupt, "scale one op kind's gradient rule (negative control)");

    auto* dataset_cmd = app.add_subcommand("dataset", "dataset utilities");
    dataset_cmd->require_subcommand(1);
    auto* pack_cmd = dataset_cmd->add_subcommand("pack", "image directory to packed format");
    pack_cmd->add_option("--in", pack_in, "class-per-directory image root")->required();
    pack_cmd->add_option("--out", pack_out, "packed file")->required();
    pack_cmd->add_option("--side", side, "output side")->required();
    pack_cmd->add_option("--channels", channels, "1 or 3 (default: as stored)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*train_cmd) return run_train(ta);
        if (*eval_cmd) return run_eval(weights, data_path);
        if (*predict_cmd) return run_predict(weights, image);
        if (*bench_cmd) return run_bench(bench_weights, bench_models, runs, warmup, n_classes, bench_channels);
        if (*grad_cmd) return run_gradcheck(target, trials, seed, corrupt);
        if (*pack_cmd) return run_pack(pack_in, pack_out, side, channels);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}

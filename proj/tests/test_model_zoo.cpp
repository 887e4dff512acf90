#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "capsnet/model.hpp"

using namespace capsnet;

namespace {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<T> t(shape);
    for (auto& v : t.storage()) v = static_cast<T>(u(rng));
    return t;
}

std::size_t count_kind(const ModelSpec& s, LayerKind k) {
    return static_cast<std::size_t>(std::count_if(s.layers.begin(), s.layers.end(), [&](const auto& l) { return l.kind == k; }));
}

const LayerSpec& first_of(const ModelSpec& s, LayerKind k) {
    return *std::find_if(s.layers.begin(), s.layers.end(), [&](const auto& l) { return l.kind == k; });
}

double sigmoid(double x) { return 1 / (1 + std::exp(-x)); }

}  // namespace

TEST(CapsuleBase, DecoderForSideSixteen) {
    const auto s = build_capsule_base(16, 5);
    EXPECT_EQ(s.decoder()->decoder.fc_sizes, (std::vector<std::size_t>{64, 256}));
    EXPECT_EQ(s.decoder()->decoder.output_side, 16u);
}

TEST(CapsuleBase, TwentyNineClassCapsules) {
    const auto s = build_capsule_base(64, 29);
    const auto& cc = first_of(s, LayerKind::class_caps);
    EXPECT_EQ(cc.n_classes, 29u);
    EXPECT_EQ(cc.capsule_dim, 16u);
    EXPECT_EQ(cc.routing_iterations, 3);
    const auto shapes = infer_shapes(s);
    // 64 -9+1-> 56 -9,/2-> 24; 16 types per position
    EXPECT_EQ(shapes[1], (Shape{24 * 24 * 16, 16}));
    EXPECT_EQ(shapes[2], (Shape{29, 16}));
    EXPECT_EQ(s.decoder()->decoder.fc_sizes, (std::vector<std::size_t>{32 * 32, 64 * 64}));
}

TEST(CapsuleBase, LayerParameters) {
    const auto s = build_capsule_base(32, 4);
    const auto& conv = s.layers[0];
    EXPECT_EQ(conv.kind, LayerKind::conv);
    EXPECT_EQ(conv.filters, 256u);
    EXPECT_EQ(conv.kernel, 9u);
    EXPECT_EQ(conv.activation, Activation::relu);
    const auto& pc = s.layers[1];
    EXPECT_EQ(pc.kind, LayerKind::primary_caps);
    EXPECT_EQ(pc.kernel, 9u);
    EXPECT_EQ(pc.stride, 2u);
    EXPECT_EQ(pc.capsule_types, 16u);
    EXPECT_EQ(pc.capsule_dim, 16u);
}

TEST(CapsuleBase, UnsupportedSideIsContractError) {
    EXPECT_THROW(build_capsule_base(48, 5), ContractError);
    EXPECT_THROW(build_capsule_base(32, 1), ContractError);
}

TEST(Capsule32V1, OneContextConvNoPooling) {
    const auto s = build_capsule32_v1(29);
    EXPECT_EQ(count_kind(s, LayerKind::conv), 2u);
    EXPECT_EQ(count_kind(s, LayerKind::maxpool), 0u);
    EXPECT_EQ(s.layers[0].filters, 64u);
    EXPECT_EQ(s.layers[0].kernel, 3u);
    EXPECT_EQ(s.layers[0].padding, Padding::same);
    EXPECT_EQ(s.layers[1].filters, 256u);
    EXPECT_EQ(s.decoder()->decoder.fc_sizes, (std::vector<std::size_t>{16, 64, 256, 1024}));
    EXPECT_EQ(s.decoder()->decoder.output_side, 32u);
    EXPECT_EQ(first_of(s, LayerKind::class_caps).n_classes, 29u);
    EXPECT_EQ(s.input_shape, (Shape{3, 32, 32}));
}

TEST(Capsule32V2, PoolOnceAfterFirstConv) {
    const auto s = build_capsule32_v2(29);
    EXPECT_EQ(count_kind(s, LayerKind::maxpool), 1u);
    EXPECT_EQ(s.layers[0].kind, LayerKind::conv);
    EXPECT_EQ(s.layers[1].kind, LayerKind::maxpool);
    EXPECT_EQ(s.layers[2].kind, LayerKind::conv);
    EXPECT_EQ(s.decoder()->decoder.fc_sizes, (std::vector<std::size_t>{64, 256, 1024, 4096}));
    EXPECT_EQ(s.decoder()->decoder.output_side, 64u);
    const auto shapes = infer_shapes(s);
    EXPECT_EQ(s.input_shape, (Shape{3, 64, 64}));
    EXPECT_EQ(shapes[0], (Shape{64, 64, 64}));
    EXPECT_EQ(shapes[1], (Shape{64, 32, 32}));
    EXPECT_EQ(shapes[2], (Shape{64, 32, 32}));
}

TEST(BaselineConvnet, Structure) {
    const auto s = build_baseline_convnet(29);
    EXPECT_EQ(count_kind(s, LayerKind::conv), 2u);
    for (const auto& l : s.layers)
        if (l.kind == LayerKind::conv) {
            EXPECT_EQ(l.filters, 32u);
            EXPECT_EQ(l.kernel, 3u);
        }
    EXPECT_EQ(count_kind(s, LayerKind::maxpool), 2u);
    EXPECT_EQ(first_of(s, LayerKind::dense).units, 128u);
    EXPECT_EQ(s.layers.back().kind, LayerKind::softmax_head);
    EXPECT_FALSE(s.is_capsule_model());
}

TEST(BaselineConvnet, SoftmaxOutputsSumToOne) {
    auto m = Model<double>::initialized(build_baseline_convnet(4, ConvNetOptions{1, 16, 32, 3, 128}), 3);
    std::mt19937_64 rng(1);
    Tape<double> tape(false);
    const auto out = m.infer(tape, random_tensor<double>({1, 16, 16}, rng, 0, 1));
    double s = 0;
    for (double v : tape.value(out.scores).data()) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9);
}

TEST(MlpHead, Shapes) {
    const auto s = build_mlp_head(1024, 29);
    const auto layout = parameter_layout(s);
    EXPECT_EQ(layout[0].shape, (Shape{512, 1024}));
    EXPECT_EQ(s.layers[0].units, 512u);
    EXPECT_EQ(s.layers[1].units, 512u);
    EXPECT_EQ(infer_shapes(s).back(), (Shape{29}));
    EXPECT_THROW(build_mlp_head(0, 29), ContractError);
    for (std::size_t len : {2048, 1920, 1056, 1024, 1280}) EXPECT_TRUE(is_backbone_feature_length(len));
    EXPECT_FALSE(is_backbone_feature_length(1000));
    EXPECT_NO_THROW(build_mlp_head(1000, 5));
}

TEST(LstmHead, Shapes) {
    const auto s = build_lstm_head(2048, 29);
    EXPECT_EQ(s.layers[0].kind, LayerKind::lstm);
    EXPECT_EQ(s.layers[0].units, 2048u);
    EXPECT_EQ(s.layers[1].units, 512u);
    const auto layout = parameter_layout(s);
    EXPECT_EQ(layout[0].name, "0.lstm.W_i");
    EXPECT_EQ(layout[0].shape, (Shape{2048, 2048 + 2048}));
    EXPECT_THROW(build_lstm_head(0, 29), ContractError);
}

TEST(ParameterCount, IndependentArithmetic) {
    EXPECT_EQ(parameter_count(build_mlp_head(1024, 29)),
              512u * 1024 + 512 + 512u * 512 + 512 + 29u * 512 + 29);
    EXPECT_EQ(parameter_count(build_lstm_head(1024, 29)),
              4 * (2048u * (1024 + 2048) + 2048) + 512u * 2048 + 512 + 29u * 512 + 29);
    // conv 3x3 same keeps 64 -> pool 32 -> conv -> pool 16; dense from 32*16*16
    EXPECT_EQ(parameter_count(build_baseline_convnet(29)),
              32u * 3 * 9 + 32 + 32u * 32 * 9 + 32 + 128u * 32 * 16 * 16 + 128 + 29u * 128 + 29);
    // 16: conv 5x5 -> 12, primary 5x5 /2 -> 4; 16*4*4 = 256 capsules
    EXPECT_EQ(parameter_count(build_capsule_base(16, 5)),
              256u * 3 * 25 + 256 + 256u * 256 * 25 + 256 + 256u * 5 * 16 * 16 + 64u * 80 + 64 + 256u * 64 + 256);
}

TEST(ParameterCount, StableAcrossBuilds) {
    for (const auto& name : zoo_model_names()) {
        const ZooInputs in{5, 3, 32, 1024};
        EXPECT_EQ(parameter_count(build_named_model(name, in)), parameter_count(build_named_model(name, in))) << name;
        EXPECT_EQ(fingerprint(build_named_model(name, in)), fingerprint(build_named_model(name, in))) << name;
    }
}

TEST(Zoo, NamesAndValidation) {
    const std::vector<std::string> expected{"capsule-base-16", "capsule-base-32", "capsule-base-64", "capsule32-v1",
                                            "capsule32-v2",    "baseline-convnet", "mlp-head",       "lstm-head"};
    auto names = zoo_model_names();
    std::sort(names.begin(), names.end());
    auto sorted = expected;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(names, sorted);
    EXPECT_THROW(build_named_model("capsule-base-48", {}), ContractError);
}

TEST(Zoo, EveryModelRunsForwardWithFiniteOutputs) {
    std::mt19937_64 rng(2);
    for (const auto& name : zoo_model_names()) {
        const ZooInputs in{5, 1, 32, 64};
        const auto spec = build_named_model(name, in);
        ASSERT_NO_THROW(validate(spec)) << name;
        const auto m = Model<float>::initialized(spec, 7);
        for (const auto& p : m.params()) ASSERT_TRUE(p.all_finite()) << name;
        Tape<float> tape(false);
        const auto out = m.infer(tape, random_tensor<float>(spec.input_shape, rng, 0, 1), {true, std::nullopt});
        EXPECT_TRUE(tape.value(out.scores).all_finite()) << name;
        EXPECT_EQ(tape.value(out.scores).size(), 5u) << name;
        if (spec.is_capsule_model()) {
            ASSERT_TRUE(out.reconstruction.has_value()) << name;
            for (float v : tape.value(*out.reconstruction).data()) {
                EXPECT_GT(v, 0.0f);
                EXPECT_LT(v, 1.0f);
            }
        }
    }
}

TEST(Zoo, SpecJsonRoundTrip) {
    for (const auto& name : zoo_model_names()) {
        const auto spec = build_named_model(name, ZooInputs{7, 3, 64, 1280});
        const auto back = spec_from_json(to_json(spec));
        EXPECT_EQ(back, spec) << name;
        EXPECT_EQ(fingerprint(back), fingerprint(spec)) << name;
    }
    EXPECT_NE(fingerprint(build_capsule32_v1(29)), fingerprint(build_capsule32_v2(29)));
}

TEST(Zoo, TinyClonesKeepLayerKinds) {
    for (const auto& name : zoo_model_names()) {
        const auto full = build_named_model(name, ZooInputs{});
        const auto tiny = tiny_clone(name);
        std::vector<LayerKind> a, b;
        for (const auto& l : full.layers) a.push_back(l.kind);
        for (const auto& l : tiny.layers) b.push_back(l.kind);
        EXPECT_EQ(a, b) << name;
        EXPECT_LT(parameter_count(tiny) * 100, parameter_count(full)) << name;
    }
}

TEST(Zoo, InitializationIsSeeded) {
    const auto spec = tiny_clone("capsule32-v1");
    const auto a = Model<float>::initialized(spec, 1), b = Model<float>::initialized(spec, 1),
               c = Model<float>::initialized(spec, 2);
    EXPECT_EQ(a.params(), b.params());
    EXPECT_NE(a.params(), c.params());
}

TEST(LstmStep, ZeroParamsAndStates) {
    const std::size_t d = 3, u = 4;
    LstmWeights<double> p{Tensor<double>(Shape{u, d + u}), Tensor<double>(Shape{u, d + u}),
                          Tensor<double>(Shape{u, d + u}), Tensor<double>(Shape{u, d + u}),
                          Tensor<double>(Shape{u}),        Tensor<double>(Shape{u}),
                          Tensor<double>(Shape{u}),        Tensor<double>(Shape{u})};
    std::mt19937_64 rng(3);
    const auto [h, c] = lstm_step(random_tensor<double>({d}, rng), Tensor<double>(Shape{u}), Tensor<double>(Shape{u}), p);
    for (double v : h.data()) EXPECT_EQ(v, 0.0);
    for (double v : c.data()) EXPECT_EQ(v, 0.0);
}

TEST(LstmStep, SaturatedForgetGateKeepsCell) {
    const std::size_t d = 3, u = 4;
    std::mt19937_64 rng(4);
    LstmWeights<double> p{random_tensor<double>({u, d + u}, rng), Tensor<double>(Shape{u, d + u}),
                          random_tensor<double>({u, d + u}, rng), random_tensor<double>({u, d + u}, rng),
                          random_tensor<double>({u}, rng),        Tensor<double>(Shape{u}, 20.0),
                          random_tensor<double>({u}, rng),        random_tensor<double>({u}, rng)};
    const auto x = random_tensor<double>({d}, rng), h0 = random_tensor<double>({u}, rng),
               c0 = random_tensor<double>({u}, rng);
    const auto [h, c] = lstm_step(x, h0, c0, p);
    std::vector<double> z(x.data().begin(), x.data().end());
    z.insert(z.end(), h0.data().begin(), h0.data().end());
    for (std::size_t k = 0; k < u; ++k) {
        double ai = p.b_i[k], ag = p.b_g[k];
        for (std::size_t j = 0; j < d + u; ++j) ai += p.W_i(k, j) * z[j], ag += p.W_g(k, j) * z[j];
        EXPECT_NEAR(c[k], c0[k] + sigmoid(ai) * std::tanh(ag), 1e-6);
    }
}

TEST(LstmStep, MatchesScalarLoopOracle) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + rng() % 5, u = 1 + rng() % 4;
        const Shape ws{u, d + u}, bs{u};
        LstmWeights<double> p{random_tensor<double>(ws, rng), random_tensor<double>(ws, rng),
                              random_tensor<double>(ws, rng), random_tensor<double>(ws, rng),
                              random_tensor<double>(bs, rng), random_tensor<double>(bs, rng),
                              random_tensor<double>(bs, rng), random_tensor<double>(bs, rng)};
        const auto x = random_tensor<double>({d}, rng), h0 = random_tensor<double>({u}, rng),
                   c0 = random_tensor<double>({u}, rng);
        const auto [h, c] = lstm_step(x, h0, c0, p);
        for (std::size_t k = 0; k < u; ++k) {
            double a[4] = {p.b_i[k], p.b_f[k], p.b_g[k], p.b_o[k]};
            const Tensor<double>* W[4] = {&p.W_i, &p.W_f, &p.W_g, &p.W_o};
            for (int g = 0; g < 4; ++g) {
                for (std::size_t j = 0; j < d; ++j) a[g] += (*W[g])(k, j) * x[j];
                for (std::size_t j = 0; j < u; ++j) a[g] += (*W[g])(k, d + j) * h0[j];
            }
            const double cc = sigmoid(a[1]) * c0[k] + sigmoid(a[0]) * std::tanh(a[2]);
            EXPECT_NEAR(c[k], cc, 1e-12);
            EXPECT_NEAR(h[k], sigmoid(a[3]) * std::tanh(cc), 1e-12);
        }
    }
}

TEST(LstmStep, ShapeMismatch) {
    const std::size_t d = 3, u = 4;
    LstmWeights<double> p{Tensor<double>(Shape{u, d + u}), Tensor<double>(Shape{u, d + u}),
                          Tensor<double>(Shape{u, d + u}), Tensor<double>(Shape{u, d}),
                          Tensor<double>(Shape{u}),        Tensor<double>(Shape{u}),
                          Tensor<double>(Shape{u}),        Tensor<double>(Shape{u})};
    EXPECT_THROW(lstm_step(Tensor<double>(Shape{d}), Tensor<double>(Shape{u}), Tensor<double>(Shape{u}), p), ShapeError);
}

TEST(Model, ReconstructionTargetIsChannelMean) {
    Tensor<float> img(Shape{3, 1, 2}, std::vector<float>{0.0f, 0.3f, 0.6f, 0.3f, 0.3f, 0.9f});
    const auto t = reconstruction_target(img);
    EXPECT_EQ(t.shape(), (Shape{1, 2}));
    EXPECT_NEAR(t[0], 0.3f, 1e-7f);
    EXPECT_NEAR(t[1], 0.5f, 1e-7f);
}

#include <gtest/gtest.h>

#include "capsnet/gradcheck.hpp"
#include "capsnet/model_spec.hpp"

using namespace capsnet;

TEST(Gradcheck, RelativeErrorFloor) {
    EXPECT_EQ(grad_rel_error(2.0, 2.0), 0.0);
    EXPECT_DOUBLE_EQ(grad_rel_error(1.0, 0.5), 0.5);
    EXPECT_DOUBLE_EQ(grad_rel_error(1e-9, 0.0), 1e-6);
}

TEST(Gradcheck, LayerKindsPass) {
    const auto r = gradcheck_layers();
    EXPECT_TRUE(r.pass()) << r.to_text();
    std::vector<std::string> names;
    for (const auto& g : r.groups) {
        names.push_back(g.name);
        EXPECT_GT(g.checked, 0u) << g.name;
    }
    for (const char* kind : {"conv2d", "maxpool", "dense", "squash", "routing", "margin_loss", "decoder", "lstm_cell"})
        EXPECT_NE(std::find(names.begin(), names.end(), kind), names.end()) << kind;
}

TEST(Gradcheck, EveryClonePasses) {
    for (const auto& target : gradcheck_targets()) {
        const auto r = gradcheck(target);
        EXPECT_EQ(r.trials, 20u);
        EXPECT_TRUE(r.pass()) << r.to_text();
        EXPECT_TRUE(r.offending().empty());
    }
}

TEST(Gradcheck, TargetsCoverTheZooClones) {
    const auto t = gradcheck_targets();
    for (const char* name : {"layers", "tiny-capsule32-v1", "tiny-capsule32-v2", "tiny-baseline-convnet",
                             "tiny-mlp-head", "tiny-lstm-head"})
        EXPECT_NE(std::find(t.begin(), t.end(), name), t.end()) << name;
}

TEST(Gradcheck, CorruptedRuleNamesTheLayer) {
    GradcheckOptions opt;
    opt.trials = 5;
    opt.corrupt = std::make_pair(OpKind::maxpool2, 1.5);
    const auto layers = gradcheck_layers(opt);
    EXPECT_FALSE(layers.pass());
    EXPECT_EQ(layers.failures(), std::vector<std::string>{"maxpool"});
    EXPECT_EQ(layers.offending(), "maxpool");
    EXPECT_NE(layers.to_text().find("FAIL"), std::string::npos);

    opt.corrupt = std::make_pair(OpKind::squash, 1.5);
    const auto model = gradcheck_model("capsule32-v1", opt);
    EXPECT_FALSE(model.pass());
    EXPECT_TRUE(model.ordered);
    // squash feeds the routing of the class capsules; that is where the backward pass first diverges
    EXPECT_EQ(model.offending(), "3.class_caps");
    EXPECT_NE(model.to_text().find("3.class_caps"), std::string::npos);

    opt.corrupt = std::make_pair(OpKind::conv2d, 1.5);
    const auto conv = gradcheck_model("tiny-baseline-convnet", opt);
    EXPECT_FALSE(conv.pass());
    EXPECT_EQ(conv.offending(), "2.conv");
}

TEST(Gradcheck, UnknownTargetIsAnError) {
    EXPECT_THROW(gradcheck("tiny-resnet"), ContractError);
    GradcheckOptions opt;
    opt.trials = 0;
    EXPECT_THROW(gradcheck("layers", opt), ContractError);
}

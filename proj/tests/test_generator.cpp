#include <gtest/gtest.h>

#include "tokvc/config.hpp"
#include "tokvc/errors.hpp"
#include "tokvc/generator.hpp"
#include "tokvc/model.hpp"

using namespace tokvc;

namespace {

GeneratorConfig tiny(ActivationKind act = ActivationKind::kAdaptiveSnake, Architecture arch = Architecture::kBigVGAN) {
  GeneratorConfig g;
  g.in_dim = 8;
  g.base_channels = 32;
  g.cond_dim = 6;
  g.convs_per_dilation = 1;
  g.activation = act;
  g.architecture = arch;
  g.lp_transition = 0.3;
  g.lp_atten_db = 40;
  return g;
}

}  // namespace

TEST(Generator, OutputLengthAndRange) {
  Generator g(tiny());
  g->eval();
  torch::NoGradGuard guard;
  for (long frames : {1L, 7L, 100L, 999L}) {
    const auto y = g->forward(torch::randn({1, frames, 8}) * 3, torch::randn({1, 6}));
    EXPECT_EQ(y.sizes(), torch::IntArrayRef({1, frames * 240}));
    EXPECT_LE(y.abs().max().item<double>(), 1.0);
    EXPECT_TRUE(torch::isfinite(y).all().item<bool>());
  }
  EXPECT_THROW(g->forward(torch::randn({1, 5, 7}), torch::randn({1, 6})), InvalidArgument);
  EXPECT_THROW(g->forward(torch::randn({1, 5, 8}), torch::randn({1, 5})), InvalidArgument);
  EXPECT_THROW(g->forward(torch::randn({1, 0, 8}), torch::randn({1, 6})), InvalidArgument);
}

TEST(Generator, ZeroConditioningMatchesPlainSnake) {
  Generator adaptive(tiny(ActivationKind::kAdaptiveSnake));
  Generator plain(tiny(ActivationKind::kSnake));
  {
    torch::NoGradGuard guard;
    const auto target = adaptive->named_parameters();
    for (const auto& p : plain->named_parameters()) target[p.key()].copy_(p.value());
  }
  EXPECT_GT(parameter_count(*adaptive), parameter_count(*plain));
  const auto h = torch::randn({2, 6, 8});
  const auto s = torch::randn({2, 6});
  torch::NoGradGuard guard;
  EXPECT_TRUE(torch::allclose(adaptive->forward(h, s), plain->forward(h, s), 1e-5, 1e-6));
}

TEST(Generator, SpeakerVectorChangesOutput) {
  Generator g(tiny());
  {
    torch::NoGradGuard guard;
    for (const auto& p : g->named_parameters()) {
      if (p.key().find("snake.weight") != std::string::npos) p.value().normal_(0.0, 0.5);
    }
  }
  torch::NoGradGuard guard;
  const auto h = torch::randn({1, 6, 8});
  const auto a = g->forward(h, torch::randn({1, 6}));
  const auto b = g->forward(h, torch::randn({1, 6}));
  EXPECT_GT((a - b).abs().max().item<double>(), 1e-6);
}

TEST(Generator, AblationVariantsTrain) {
  std::vector<long> counts;
  for (auto [act, arch] : {std::pair{ActivationKind::kAdaptiveSnake, Architecture::kBigVGAN},
                           std::pair{ActivationKind::kSnake, Architecture::kBigVGAN},
                           std::pair{ActivationKind::kSnake, Architecture::kHifiGAN}}) {
    Generator g(tiny(act, arch));
    const auto y = g->forward(torch::randn({2, 4, 8}), torch::randn({2, 6}));
    EXPECT_EQ(y.size(1), 4 * 240);
    y.pow(2).mean().backward();
    long with_grad = 0;
    for (const auto& p : g->parameters()) with_grad += p.grad().defined() ? 1 : 0;
    EXPECT_GT(with_grad, 0);
    counts.push_back(parameter_count(*g));
  }
  EXPECT_NE(counts[0], counts[1]);
  EXPECT_NE(counts[1], counts[2]);
}

TEST(Generator, ParameterScaling) {
  auto small = tiny();
  auto wide = tiny();
  wide.base_channels = 64;
  EXPECT_GT(parameter_count(*Generator(wide)), parameter_count(*Generator(small)));

  const auto desk = count_params(Config::desk_scale().model);
  EXPECT_LT(desk.total(), 3000000);
  const auto paper = count_params(Config::paper_scale().model);
  EXPECT_GE(paper.total(), 30000000);
  EXPECT_LE(paper.total(), 50000000);
}

TEST(Generator, ConfigValidation) {
  auto c = tiny();
  c.upsample_factors = {8, 5, 3, 3};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = tiny();
  c.amp_kernel_sizes = {3, 4};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = tiny();
  c.convs_per_dilation = 3;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_THROW(parse_activation("relu"), InvalidArgument);
  EXPECT_EQ(parse_architecture(to_string(Architecture::kHifiGAN)), Architecture::kHifiGAN);
}

TEST(Vocoder, SpeakerVectorIgnoresPromptOrder) {
  auto cfg = Config::desk_scale().model;
  cfg.frontend.prompt_dim = 12;
  cfg.tokenizer.prompt_dim = 12;
  cfg.sync();
  Vocoder v(cfg);
  v->eval();
  const auto content = torch::randn({1, 5, cfg.frontend.content_dim});
  const auto prompt = torch::randn({1, 40, 12});
  torch::NoGradGuard guard;
  const auto ref = v->forward(content, {}, prompt, {});
  const auto spk = VocoderImpl::speaker_vector(prompt);
  for (int i = 0; i < 5; ++i) {
    const auto perm = prompt.index_select(1, torch::randperm(40));
    EXPECT_TRUE(torch::equal(VocoderImpl::speaker_vector(perm), spk));
    const auto out = v->forward(content, {}, perm, {});
    EXPECT_LE((out.wav - ref.wav).abs().max().item<double>(), 1e-4);
  }
}

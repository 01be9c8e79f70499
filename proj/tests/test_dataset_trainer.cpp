#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "styleid/checkpoint.hpp"
#include "styleid/image_io.hpp"
#include "styleid/trainer.hpp"
#include "support.hpp"

using namespace styleid;

namespace {

ProceduralSpec small_spec() {
  ProceduralSpec s;
  s.resolution = 16;
  s.content_train = 6;
  s.style_train = 6;
  s.content_val = 2;
  s.style_val = 2;
  return s;
}

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.data = small_spec();
  c.model = test::tiny_config();
  c.steps = 6;
  c.batch_size = 2;
  c.steps_per_epoch = 2;
  c.warmup_steps = 2;
  c.learning_rate = 1e-3;
  c.val_draws = 1;
  c.checkpoint.clear();
  c.loss_csv.clear();
  return c;
}

bool same_pixels(const DatasetItem& a, const DatasetItem& b) { return a.image.rgb == b.image.rgb; }

}  // namespace

TEST_CASE("procedural dataset") {
  const auto spec = small_spec();
  const auto a = generate_dataset(spec);
  const auto b = generate_dataset(spec);
  REQUIRE(a.content_train.size() == 6);
  REQUIRE(a.style_val.size() == 2);
  for (std::size_t i = 0; i < a.content_train.size(); ++i) CHECK(same_pixels(a.content_train[i], b.content_train[i]));
  for (std::size_t i = 0; i < a.style_train.size(); ++i) CHECK(same_pixels(a.style_train[i], b.style_train[i]));

  SUBCASE("single images regenerate independently") {
    CHECK(same_pixels(generate_content(spec.seed, 3, 16), a.content_train[3]));
    CHECK(same_pixels(generate_style(spec.seed, 4, 16), a.style_train[4]));
  }
  SUBCASE("different indices and seeds differ") {
    std::set<std::vector<std::uint8_t>> distinct;
    for (const auto& item : a.content_train) distinct.insert(item.image.rgb);
    CHECK(distinct.size() == a.content_train.size());
    CHECK_FALSE(same_pixels(generate_content(spec.seed + 1, 0, 16), a.content_train[0]));
    CHECK_FALSE(same_pixels(a.content_val[0], a.content_train[0]));
  }
  SUBCASE("style images use only their palette") {
    for (const auto& item : a.style_train) {
      REQUIRE(item.palette >= 0);
      const auto& pal = style_palettes().at(static_cast<std::size_t>(item.palette));
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) CHECK(std::find(pal.begin(), pal.end(), item.image.pixel(y, x)) != pal.end());
    }
    CHECK(style_palettes().size() == 16);
  }
  SUBCASE("written layout") {
    test::TempDir dir("data");
    write_dataset(a, spec, dir.path());
    const auto manifest = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
    CHECK(manifest.at("spec").get<ProceduralSpec>().seed == spec.seed);
    CHECK(std::filesystem::exists(dir / "content" / "train" / (a.content_train[0].name + ".png")));
    const auto img = read_png(dir.path() / "style" / "val" / (a.style_val[1].name + ".png"));
    CHECK(img.identical(a.style_val[1].image.to_unit()));
  }
}

TEST_CASE("diffusion loss") {
  const auto sched = build_noise_schedule();
  Rng rng(3);
  std::vector<TensorF> batch;
  std::vector<NoiseDraw> draws;
  for (int i = 0; i < 4; ++i) {
    batch.push_back(oracle::random_uniform({3, 8, 8}, 40 + i, -1, 1));
    draws.push_back(draw_noise(batch.back().shape(), 1000, rng));
  }

  SUBCASE("zero predictor scores the noise energy") {
    const NoisePredictor<float> zero = [](const TensorF& x, int, const HookMap<float>&) {
      return TensorF::zeros(x.shape());
    };
    double total = 0;
    Rng r(4);
    for (int k = 0; k < 100; ++k) {
      std::vector<NoiseDraw> d;
      for (const auto& x : batch) d.push_back(draw_noise(x.shape(), 1000, r));
      total += diffusion_loss(zero, batch, d, sched);
    }
    CHECK(total / 100 == doctest::Approx(1.0).epsilon(0.1));
  }
  SUBCASE("an oracle predictor scores zero") {
    int call = 0;
    const NoisePredictor<float> perfect = [&](const TensorF& z, int t, const HookMap<float>&) {
      const auto& x = batch[static_cast<std::size_t>(call++)];
      const double ab = sched.alpha_bar_at(t);
      Eigen::VectorXf e = ((z.vec().cast<double>() - std::sqrt(ab) * x.vec().cast<double>()) / std::sqrt(1 - ab))
                              .cast<float>();
      return TensorF(z.shape(), std::move(e));
    };
    const double loss = diffusion_loss(perfect, batch, draws, sched);
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-6);
  }
  SUBCASE("double-precision oracle") {
    const NoisePredictor<float> half = [](const TensorF& z, int, const HookMap<float>&) {
      return TensorF(z.shape(), Eigen::VectorXf(0.5f * z.vec()));
    };
    double ref = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double ab = sched.alpha_bar_at(draws[i].t);
      double sq = 0;
      for (Eigen::Index j = 0; j < batch[i].size(); ++j) {
        const double z = std::sqrt(ab) * batch[i][j] + std::sqrt(1 - ab) * draws[i].eps[j];
        sq += std::pow(draws[i].eps[j] - 0.5 * z, 2);
      }
      ref += sq / static_cast<double>(batch[i].size());
    }
    ref /= static_cast<double>(batch.size());
    CHECK(std::abs(diffusion_loss(half, batch, draws, sched) - ref) < 1e-5 * ref);
  }
  SUBCASE("draws") {
    Rng r(5);
    for (int k = 0; k < 200; ++k) {
      const int t = draw_noise({1, 1, 1}, 1000, r).t;
      CHECK(t >= 1);
      CHECK(t <= 1000);
    }
  }
}

TEST_CASE("learning rate schedule") {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.warmup_steps = 100;
  c.steps = 1100;
  CHECK(learning_rate_at(c, 1) == doctest::Approx(1e-5));
  CHECK(learning_rate_at(c, 100) == doctest::Approx(1e-3));
  CHECK(learning_rate_at(c, 600) == doctest::Approx(0.55e-3));
  CHECK(learning_rate_at(c, 1100) == doctest::Approx(1e-4));
  for (int s = 101; s < 1100; s += 50) CHECK(learning_rate_at(c, s + 50) <= learning_rate_at(c, s));
  c.cosine_decay = false;
  CHECK(learning_rate_at(c, 900) == doctest::Approx(1e-3));
}

TEST_CASE("train config json") {
  TrainConfig c = tiny_train_config();
  c.seed = 99;
  const nlohmann::json j = c;
  const auto back = j.get<TrainConfig>();
  CHECK(back.seed == 99);
  CHECK(back.model == c.model);
  CHECK(back.data.content_train == 6);
  auto bad = j;
  bad["learnign_rate"] = 1;
  CHECK_THROWS_AS(bad.get<TrainConfig>(), ConfigError);
}

TEST_CASE("training steps") {
  const auto config = tiny_train_config();
  const auto sched = build_noise_schedule();
  std::vector<TensorF> batch{unit_to_model(generate_content(1, 0, 16).image.to_unit()),
                             unit_to_model(generate_style(1, 0, 16).image.to_unit())};

  SUBCASE("deterministic for a fixed seed") {
    auto a = init_train_state(config), b = init_train_state(config);
    Rng ra(7), rb(7);
    const auto sa = training_step(a, batch, sched, ra, config);
    const auto sb = training_step(b, batch, sched, rb, config);
    CHECK(sa.loss == sb.loss);
    CHECK(sa.grad_norm == sb.grad_norm);
    for (const auto& [name, t] : a.weights.params) CHECK(t.identical(b.weights.at(name)));
    CHECK(a.step == 1);
  }
  SUBCASE("fits a fixed batch") {
    auto cfg = config;
    cfg.steps = 60;
    cfg.warmup_steps = 5;
    auto state = init_train_state(cfg);
    Rng draw_rng(8);
    std::vector<NoiseDraw> draws;
    for (const auto& x : batch) draws.push_back(draw_noise(x.shape(), 1000, draw_rng));
    const double before = diffusion_loss(unet_predictor(state.weights), batch, draws, sched);
    Rng rng(9);
    for (int i = 0; i < 60; ++i) training_step(state, batch, sched, rng, cfg);
    const double after = diffusion_loss(unet_predictor(state.weights), batch, draws, sched);
    CHECK(after < 0.8 * before);
  }
}

TEST_CASE("full training loop") {
  test::TempDir dir("train");
  auto config = tiny_train_config();
  config.checkpoint = (dir / "m.ckpt").string();
  config.loss_csv = (dir / "loss.csv").string();
  int epochs = 0;
  const auto result = train(config, [&](const EpochRecord&) { ++epochs; });
  CHECK(epochs == 3);
  CHECK(result.history.size() == 3);
  CHECK(result.history.back().step == 6);

  const auto loaded = read_checkpoint(config.checkpoint);
  CHECK(loaded.metadata.at("steps") == 6);
  for (const auto& [name, t] : result.ema.params) CHECK(loaded.weights.at(name).identical(t));
  std::ifstream csv(config.loss_csv);
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 1 + 1 + 3);

  SUBCASE("divergence aborts") {
    auto diverging = tiny_train_config();
    diverging.divergence_factor = 1e-3;
    diverging.divergence_patience = 2;
    CHECK_THROWS_AS(train(diverging), NumericError);
  }
}

#include "styleid/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "styleid/checkpoint.hpp"
#include "styleid/image_io.hpp"

namespace styleid {

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"data", c.data},
                     {"model", c.model},
                     {"seed", c.seed},
                     {"steps", c.steps},
                     {"batch_size", c.batch_size},
                     {"steps_per_epoch", c.steps_per_epoch},
                     {"learning_rate", c.learning_rate},
                     {"warmup_steps", c.warmup_steps},
                     {"cosine_decay", c.cosine_decay},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"grad_clip", c.grad_clip},
                     {"ema_decay", c.ema_decay},
                     {"val_draws", c.val_draws},
                     {"divergence_factor", c.divergence_factor},
                     {"divergence_patience", c.divergence_patience},
                     {"checkpoint", c.checkpoint},
                     {"loss_csv", c.loss_csv}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::vector<std::string> known{
      "data",      "model",     "seed",     "steps",    "batch_size",        "steps_per_epoch",
      "learning_rate", "warmup_steps", "cosine_decay", "beta1", "beta2", "adam_eps",         "grad_clip",
      "ema_decay", "val_draws", "divergence_factor", "divergence_patience", "checkpoint", "loss_csv"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("train config: unknown key '" + key + "'");
    }
  }
  TrainConfig d;
  c.data = j.value("data", d.data);
  c.model = j.value("model", d.model);
  c.seed = j.value("seed", d.seed);
  c.steps = j.value("steps", d.steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.steps_per_epoch = j.value("steps_per_epoch", d.steps_per_epoch);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.cosine_decay = j.value("cosine_decay", d.cosine_decay);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.ema_decay = j.value("ema_decay", d.ema_decay);
  c.val_draws = j.value("val_draws", d.val_draws);
  c.divergence_factor = j.value("divergence_factor", d.divergence_factor);
  c.divergence_patience = j.value("divergence_patience", d.divergence_patience);
  c.checkpoint = j.value("checkpoint", d.checkpoint);
  c.loss_csv = j.value("loss_csv", d.loss_csv);
}

namespace {

void validate(const TrainConfig& c) {
  c.model.validate();
  if (c.data.resolution != c.model.resolution) throw ConfigError("train config: data and model resolution differ");
  if (c.steps < 1 || c.batch_size < 1 || c.steps_per_epoch < 1 || c.val_draws < 1 || c.warmup_steps < 0) {
    throw ConfigError("train config: steps, batch_size, steps_per_epoch and val_draws must be positive");
  }
  if (!(c.learning_rate > 0) || !(c.beta1 >= 0 && c.beta1 < 1) || !(c.beta2 >= 0 && c.beta2 < 1) ||
      !(c.adam_eps > 0) || !(c.grad_clip > 0) || !(c.ema_decay >= 0 && c.ema_decay < 1)) {
    throw ConfigError("train config: optimiser settings out of range");
  }
  if (c.data.content_train + c.data.style_train < 1) throw ConfigError("train config: empty training set");
  if (c.data.content_val + c.data.style_val < 1) throw ConfigError("train config: empty validation set");
}

}  // namespace

double learning_rate_at(const TrainConfig& c, int step) {
  if (step <= c.warmup_steps) return c.learning_rate * step / std::max(1, c.warmup_steps);
  if (!c.cosine_decay || c.steps <= c.warmup_steps) return c.learning_rate;
  const double progress = static_cast<double>(step - c.warmup_steps) / (c.steps - c.warmup_steps);
  return c.learning_rate * (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress))));
}

NoiseDraw draw_noise(const Shape& shape, int train_steps, Rng& rng) {
  NoiseDraw d;
  d.t = std::uniform_int_distribution<int>(1, train_steps)(rng);
  std::normal_distribution<float> normal;
  d.eps = TensorF::generate(shape, [&](Eigen::Index) { return normal(rng); });
  return d;
}

double diffusion_loss(const NoisePredictor<float>& net, const std::vector<TensorF>& batch,
                      const std::vector<NoiseDraw>& draws, const NoiseSchedule& schedule) {
  if (batch.size() != draws.size() || batch.empty()) throw ShapeError("diffusion_loss: batch and draws differ");
  double total = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto z_t = q_sample(batch[i], draws[i].t, draws[i].eps, schedule);
    const auto pred = net(z_t, draws[i].t, {});
    if (pred.shape() != batch[i].shape()) throw ShapeError("diffusion_loss: prediction shape mismatch");
    total += (pred.vec().cast<double>() - draws[i].eps.vec().cast<double>()).squaredNorm() /
             static_cast<double>(pred.size());
  }
  return total / static_cast<double>(batch.size());
}

TrainState init_train_state(const TrainConfig& config) {
  TrainState s;
  s.weights = init_unet<float>(config.model, config.seed);
  s.ema = s.weights;
  for (const auto& [name, t] : s.weights.params) {
    s.moments.m[name] = Vector<float>::Zero(t.size());
    s.moments.v[name] = Vector<float>::Zero(t.size());
  }
  return s;
}

StepResult training_step(TrainState& state, const std::vector<TensorF>& batch, const NoiseSchedule& schedule,
                         Rng& rng, const TrainConfig& config) {
  if (batch.empty()) throw ShapeError("training_step: empty batch");
  const auto& model = state.weights.config;
  std::map<std::string, Vector<double>> grads;
  for (const auto& [name, t] : state.weights.params) grads[name] = Vector<double>::Zero(t.size());

  double loss = 0;
  for (const auto& x : batch) {
    const auto draw = draw_noise(x.shape(), model.train_steps, rng);
    ad::Tape<float> tape;
    const auto params = bind_parameters(state.weights, &tape);
    const auto z_t = q_sample(x, draw.t, draw.eps, schedule);
    auto out = unet_forward(ad::constant(z_t), draw.t, model, params, {});
    auto l = ad::mean_squared_error(out, ad::constant(draw.eps));
    loss += l.value.item();
    const auto g = tape.backward(l);
    for (auto& [name, acc] : grads) acc += g.of(params.at(name)).vec().cast<double>();
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  loss *= inv_b;
  if (!std::isfinite(loss)) {
    throw NumericError("training diverged: non-finite loss at step " + std::to_string(state.step + 1));
  }

  double sq = 0;
  for (auto& [name, g] : grads) {
    g *= inv_b;
    sq += g.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    throw NumericError("training diverged: non-finite gradient at step " + std::to_string(state.step + 1) +
                       " (loss " + std::to_string(loss) + ")");
  }
  const double clip = norm > config.grad_clip ? config.grad_clip / norm : 1.0;

  ++state.step;
  const int n = state.step;
  const double lr = learning_rate_at(config, n);
  const double bc1 = 1.0 - std::pow(config.beta1, n);
  const double bc2 = 1.0 - std::pow(config.beta2, n);
  // Standard warm-up of the averaging horizon so early EMA weights are usable.
  const double decay = std::min(config.ema_decay, (1.0 + n) / (10.0 + n));

  for (auto& [name, g] : grads) {
    auto& m = state.moments.m[name];
    auto& v = state.moments.v[name];
    const Vector<float> gf = (g * clip).cast<float>();
    m = static_cast<float>(config.beta1) * m + static_cast<float>(1 - config.beta1) * gf;
    v = static_cast<float>(config.beta2) * v + static_cast<float>(1 - config.beta2) * gf.cwiseProduct(gf);
    const auto& w = state.weights.params.at(name).vec();
    Vector<float> updated =
        w - static_cast<float>(lr) *
                ((m / static_cast<float>(bc1)).array() /
                 ((v / static_cast<float>(bc2)).array().sqrt() + static_cast<float>(config.adam_eps)))
                    .matrix();
    const auto& e = state.ema.params.at(name).vec();
    Vector<float> ema = static_cast<float>(decay) * e + static_cast<float>(1 - decay) * updated;
    const auto shape = state.weights.params.at(name).shape();
    state.weights.params.at(name) = TensorF(shape, std::move(updated));
    state.ema.params.at(name) = TensorF(shape, std::move(ema));
  }
  return {loss, norm};
}

TrainResult train(const TrainConfig& config, const std::function<void(const EpochRecord&)>& progress) {
  validate(config);
  const auto data = generate_dataset(config.data);
  std::vector<TensorF> train_set, val_set;
  for (const auto* split : {&data.content_train, &data.style_train}) {
    for (const auto& item : *split) train_set.push_back(unit_to_model(item.image.to_unit()));
  }
  for (const auto* split : {&data.content_val, &data.style_val}) {
    for (const auto& item : *split) val_set.push_back(unit_to_model(item.image.to_unit()));
  }

  const auto schedule = build_noise_schedule(config.model.train_steps);
  Rng rng(config.seed);
  Rng val_rng(config.seed ^ 0x5eed5eed5eedULL);
  std::vector<TensorF> val_batch;
  std::vector<NoiseDraw> val_draws;
  for (int k = 0; k < config.val_draws; ++k) {
    for (const auto& x : val_set) {
      val_batch.push_back(x);
      val_draws.push_back(draw_noise(x.shape(), config.model.train_steps, val_rng));
    }
  }

  auto state = init_train_state(config);
  auto val_loss = [&] { return diffusion_loss(unet_predictor(state.ema), val_batch, val_draws, schedule); };

  TrainResult result;
  result.initial_val_loss = val_loss();
  std::ofstream csv;
  if (!config.loss_csv.empty()) {
    const std::filesystem::path p(config.loss_csv);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    csv.open(p);
    if (!csv) throw IoError("cannot write loss curve '" + config.loss_csv + "'");
    csv << "epoch,step,train_loss,val_loss,seconds\n";
    csv << "0,0,," << result.initial_val_loss << ",0\n";
  }

  const auto start = std::chrono::steady_clock::now();
  std::uniform_int_distribution<std::size_t> pick(0, train_set.size() - 1);
  std::vector<TensorF> batch(static_cast<std::size_t>(config.batch_size));
  int epoch = 0;
  int bad_epochs = 0;
  double epoch_loss = 0;
  int epoch_steps = 0;
  while (state.step < config.steps) {
    for (auto& x : batch) x = train_set[pick(rng)];
    epoch_loss += training_step(state, batch, schedule, rng, config).loss;
    ++epoch_steps;
    if (epoch_steps == config.steps_per_epoch || state.step == config.steps) {
      EpochRecord rec{++epoch, state.step, epoch_loss / epoch_steps, val_loss(),
                      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
      result.history.push_back(rec);
      if (csv.is_open()) csv << rec.epoch << "," << rec.step << "," << rec.train_loss << "," << rec.val_loss << ","
                             << rec.seconds << std::endl;
      if (progress) progress(rec);
      bad_epochs = rec.val_loss > config.divergence_factor * result.initial_val_loss ? bad_epochs + 1 : 0;
      if (bad_epochs >= config.divergence_patience) {
        std::ostringstream msg;
        msg << "training diverged: validation loss " << rec.val_loss << " above " << config.divergence_factor
            << "x initial " << result.initial_val_loss << " for " << bad_epochs << " epochs";
        throw NumericError(msg.str());
      }
      epoch_loss = 0;
      epoch_steps = 0;
    }
  }

  result.ema = state.ema;
  if (!config.checkpoint.empty()) {
    const std::filesystem::path p(config.checkpoint);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    nlohmann::json meta{{"train_config", config},
                        {"initial_val_loss", result.initial_val_loss},
                        {"final_val_loss", result.history.empty() ? result.initial_val_loss : result.history.back().val_loss},
                        {"steps", state.step},
                        {"train_seconds", result.history.empty() ? 0.0 : result.history.back().seconds}};
    save_checkpoint(p, result.ema, meta);
  }
  return result;
}

}  // namespace styleid

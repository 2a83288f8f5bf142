#include "vitca/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "vitca/errors.hpp"
#include "vitca/losses.hpp"
#include "vitca/serialization.hpp"

namespace vitca {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations == 0) throw ConfigError("train.iterations must be at least 1");
  if (batch == 0) throw ConfigError("train.batch must be at least 1");
  if (!(sigma >= 0.0 && sigma <= 1.0)) throw ConfigError("train.sigma must satisfy 0 <= sigma <= 1");
  if (t_min == 0 || t_min > t_max) throw ConfigError("train.t_min and train.t_max must satisfy 1 <= t_min <= t_max");
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
  if (pool_size < batch) throw ConfigError("train.batch must not exceed train.pool_size");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train.adam_beta1 and train.adam_beta2 must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
  if (!(adam.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (rollout == RolloutMode::checkpointed && checkpoint_segments > t_min) {
    throw ConfigError("train.checkpoint_segments must not exceed train.t_min");
  }
  if (rollout == RolloutMode::fusion_mitosis && t_min < fusion_pre + fusion_post + 1) {
    throw ConfigError("train.t_min must be at least fusion_pre + fusion_post + 1 for fusion-mitosis rollouts");
  }
}

std::string metrics_csv_header() {
  return "iteration,lr,T,loss,L_rec,L_o_overflow,L_h_overflow,pool_size,wall_ms_forward,wall_ms_backward,peak_bytes";
}

std::string metrics_csv_row(const IterationMetrics& m) {
  return std::to_string(m.iteration) + "," + fmt17(m.lr) + "," + std::to_string(m.steps) + "," + fmt17(m.loss) + "," +
         fmt17(m.rec) + "," + fmt17(m.output_overflow) + "," + fmt17(m.hidden_overflow) + "," +
         std::to_string(m.pool_size) + "," + fmt17(m.wall_ms_forward) + "," + fmt17(m.wall_ms_backward) + "," +
         std::to_string(m.peak_bytes);
}

Trainer::Trainer(ModelConfig model, TrainConfig train, ImageBatch dataset, std::uint64_t seed)
    : model_(std::move(model)),
      train_(std::move(train)),
      dataset_(std::move(dataset)),
      rng_(seed),
      optimizer_(train_.adam),
      pool_(train_.pool_size),
      curriculum_(train_.curriculum_max_iteration, NoiseKind::dropout) {
  model_.validate();
  train_.validate();
  if (dataset_.empty()) throw DataError("training set is empty");
  if (dataset_.batch < train_.batch) {
    throw ConfigError("training set has " + std::to_string(dataset_.batch) + " images, fewer than train.batch=" +
                      std::to_string(train_.batch));
  }
  const CellLayout& lay = model_.layout;
  if (dataset_.channels != lay.input_channels || dataset_.channels != lay.output_channels) {
    throw ConfigError("dataset has " + std::to_string(dataset_.channels) +
                      " channels but the model expects input/output channels " + std::to_string(lay.input_channels) +
                      "/" + std::to_string(lay.output_channels));
  }
  if (dataset_.height % lay.patch_h || dataset_.width % lay.patch_w) {
    throw ConfigError("image size is not divisible by the patch size");
  }
  curriculum_ = CurriculumSchedule(train_.curriculum_max_iteration, noise_kind());
  PrecisionScope precision(train_.precision);
  const std::size_t cells = (dataset_.height / lay.patch_h) * (dataset_.width / lay.patch_w);
  params_ = init_params(model_, cells, rng_);
}

NoiseKind Trainer::noise_kind() const {
  if (train_.noise) return *train_.noise;
  return dataset_.channels > 1 ? NoiseKind::dropout : NoiseKind::gaussian;
}

IterationMetrics Trainer::step() {
  PrecisionScope precision(train_.precision);
  const std::size_t i = iteration_ + 1;
  const std::size_t b = train_.batch;
  memory::reset_peak();

  const auto j = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(dataset_.batch - b)));
  ImageBatch truth = dataset_.range(j, j + b);
  CellGrid grid;
  IterationMetrics m;
  m.iteration = i;
  if (pool_.size() > b && i % 2 == 0) {
    grid = pool_.first_grids(b);
    truth = pool_.first_truths(b);
    m.from_pool = true;
  } else {
    const auto available = curriculum_.available(i);
    std::vector<MaskConfig> configs(b);
    for (auto& c : configs) c = available[static_cast<std::size_t>(rng_.below(available.size()))];
    const MaskedImages masked = apply_masks(truth, configs, rng_);
    grid = inject_input(seed_cells(model_.layout, b, truth.height, truth.width), masked.masked);
  }
  m.steps = static_cast<std::size_t>(
      rng_.uniform_int(static_cast<std::int64_t>(train_.t_min), static_cast<std::int64_t>(train_.t_max)));

  RolloutOptions ro;
  ro.mode = train_.rollout;
  ro.segments = train_.checkpoint_segments;
  ro.fusion_pre = train_.fusion_pre;
  ro.fusion_post = train_.fusion_post;

  params_.zero_grad();
  const auto t0 = Clock::now();
  const CellGrid out = rollout(grid, params_, model_, m.steps, train_.sigma, rng_, ro);
  const LossTerms loss = compute_loss(out, truth, train_.alpha, train_.beta);
  m.wall_ms_forward = ms_since(t0);
  m.loss = loss.total.item();
  m.rec = loss.rec;
  m.output_overflow = loss.output_overflow;
  m.hidden_overflow = loss.hidden_overflow;
  if (!std::isfinite(m.loss)) {
    throw DivergenceError("non-finite loss at iteration " + std::to_string(i));
  }

  const auto t1 = Clock::now();
  if (loss.total.requires_grad()) backward(loss.total);
  m.wall_ms_backward = ms_since(t1);
  m.peak_bytes = memory::stats().peak_bytes;

  const auto named = params_.named();
  normalize_gradients(named);
  m.lr = cosine_lr(i - 1, train_.iterations, train_.lr);
  optimizer_.step(named, m.lr);
  params_.zero_grad();

  pool_.append(out.detached(), truth);
  pool_.maintain(rng_);
  m.pool_size = pool_.size();
  iteration_ = i;
  return m;
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_model(dir / "model.bin", model_, params_);
  std::vector<NamedTensor> state = optimizer_.export_state();
  for (NamedTensor& t : pool_.export_state()) state.push_back(std::move(t));
  write_tensor_file(dir / "state.bin", state);
  nlohmann::json j = {{"iteration", iteration_},
                      {"rng", rng_.state()},
                      {"pool_rows", model_.layout.patch_h ? dataset_.height / model_.layout.patch_h : 0},
                      {"pool_cols", model_.layout.patch_w ? dataset_.width / model_.layout.patch_w : 0}};
  std::ofstream f(dir / "state.json", std::ios::trunc);
  if (!f) throw DataError("cannot write " + (dir / "state.json").string());
  f << j.dump(2) << '\n';
}

void Trainer::load_checkpoint(const std::filesystem::path& dir) {
  PrecisionScope precision(train_.precision);
  std::ifstream f(dir / "state.json");
  if (!f) throw DataError("missing " + (dir / "state.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "state.json").string() + ": " + e.what());
  }
  LoadedModel loaded = load_model(dir / "model.bin");
  if (model_config_to_json(loaded.config) != model_config_to_json(model_)) {
    throw ConfigError("checkpoint model hyperparameters differ from the configured model");
  }
  assign_params(params_, params_to_named(loaded.params));
  const auto state = read_tensor_file(dir / "state.bin");
  optimizer_.import_state(state);
  pool_.import_state(state, model_.layout, j.at("pool_rows").get<std::size_t>(), j.at("pool_cols").get<std::size_t>());
  rng_ = Rng::from_state(j.at("rng").get<std::string>());
  iteration_ = j.at("iteration").get<std::size_t>();
}

}  // namespace vitca

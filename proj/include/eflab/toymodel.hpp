#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "eflab/autodiff.hpp"
#include "eflab/corruption.hpp"
#include "eflab/losses.hpp"
#include "eflab/model.hpp"
#include "eflab/schedule.hpp"
#include "eflab/sequence.hpp"

namespace eflab {

struct ModelDims {
  int vocab = 4;            ///< M ordinary tokens
  int embed = 8;            ///< d
  int hidden = 32;          ///< width of the gap mixer
  int image_dim = 2;        ///< N_img
  int velocity_hidden = 32;
  std::size_t max_len = 16;
  bool text_time_feature = false;  ///< feed t_text to the insertion heads

  int gap_features() const { return text_time_feature ? 4 : 3; }
  friend bool operator==(ModelDims const&, ModelDims const&) = default;
};

void to_json(nlohmann::json& j, ModelDims const& d);
void from_json(nlohmann::json const& j, ModelDims& d);

/// Dense parameter tensors in a fixed order (see ModelParams::Slot).
struct ModelParams {
  enum Slot : std::size_t {
    embedding,  // (M+2) x d: tokens, image token, boundary
    w1, b1, w2, b2,
    w_pi, b_pi, w_lambda, b_lambda, w_q, b_q,
    v1, c1, v2, c2, v3, c3, v_skip,
    slot_count
  };

  ModelDims dims;
  std::vector<Eigen::MatrixXd> tensors;

  static ModelParams init(ModelDims const& dims, Rng& rng, double scale = 0.05);
  static std::vector<std::string> const& names();
  static bool feeds_images_only(std::size_t slot) { return slot >= v1 && slot < slot_count; }

  std::size_t parameter_count() const;
  Eigen::VectorXd flatten() const;
  void assign(Eigen::VectorXd const& flat);
  bool all_finite() const;
};

/// Gradient-shaped companion of ModelParams::tensors.
using Gradients = std::vector<Eigen::MatrixXd>;

/// Graph handles of one forward pass.
struct ForwardGraph {
  ad::Tape tape;
  std::vector<ad::Var> pi_score, lambda_score, q_logits;  ///< per generation gap
  std::vector<ad::Var> velocity;                          ///< per generated image
  std::vector<std::size_t> velocity_element;
  std::size_t first_gap = 0;
};

/// Builds the forward graph. Insertion heads never see t_text unless
/// dims.text_time_feature is set; velocities see each image's own time.
ForwardGraph build_forward(ModelParams const& params, MixedSequence const& x_t, double t_text = 0.0);

/// Heads (all gaps) and velocities (all images; zero for prompt images).
ModelOutput forward(ModelParams const& params, MixedSequence const& x_t, double t_text = 0.0);

struct RecordLoss {
  LossReport report;
  Gradients grads;
};

/// grand_total = text loss + weight_img * image loss, with exact reverse-mode gradients.
RecordLoss loss_and_grad(ModelParams const& params, CorruptionRecord const& rec, double weight_img);
/// Forward-only value of the same objective.
double loss_value(ModelParams const& params, CorruptionRecord const& rec, double weight_img);

/// Mean report and mean gradient over a batch; reduction order is the batch order.
RecordLoss batch_loss_and_grad(ModelParams const& params, std::span<CorruptionRecord const> batch, double weight_img);

class ToyModel final : public HeadModel {
public:
  explicit ToyModel(ModelParams params) : params_(std::move(params)) {}
  void evaluate(MixedSequence const& seq, double t_text, ModelOutput& out) const override;
  ModelParams const& params() const noexcept { return params_; }

private:
  ModelParams params_;
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t steps = 1000;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  GenerationMode mode = GenerationMode::interleaved;
  double weight_img = 1.0;
  double clip_norm = 5.0;
  /// Probability a record is trained in `mode`; otherwise it is trained
  /// sequentially (text clean, images noised at independent times).
  double mixed_generation_prob = 1.0;
  /// Probability the prompt is dropped, teaching the unconditional prediction.
  double uncond_prob = 0.0;
  double divergence_limit = 1e6;
  /// The step size decays linearly from learning_rate to learning_rate * this; 1 keeps it constant.
  double final_lr_fraction = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, TrainConfig const& c);
void from_json(nlohmann::json const& j, TrainConfig& c);

struct TrainResult {
  ModelParams params;
  std::vector<LossReport> history;  ///< batch-mean report per step
};

/// Draws a training record from x1 per the config (mode choice, prompt dropout).
CorruptionRecord training_record(MixedSequence const& x1, TrainConfig const& cfg, Schedule const& s,
                                 int image_token_id, Rng& rng);

TrainResult train(Dataset const& data, TrainConfig const& cfg, Schedule const& s, ModelDims const& dims,
                  std::function<void(std::size_t, LossReport const&)> const& on_step = {});

/// Continues training from existing parameters.
TrainResult train_from(ModelParams params, Dataset const& data, TrainConfig const& cfg, Schedule const& s,
                       std::function<void(std::size_t, LossReport const&)> const& on_step = {});

/// Binary blob (magic, version, count, little-endian float64 values) plus a
/// JSON sidecar at `path + ".json"` holding dims, schedule, and tensor shapes.
void save_checkpoint(std::string const& path, ModelParams const& params, Schedule const& s,
                     nlohmann::json const& extra = {});
ModelParams load_checkpoint(std::string const& path, Schedule* schedule = nullptr);

}  // namespace eflab

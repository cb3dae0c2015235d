#pragma once

// MainEncoder, Iterator and Updater, and the iterate-until-stable forward
// pass. Templated on the float width: float for training, double for
// gradient checks.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "glopt/autodiff.hpp"
#include "glopt/funcgen.hpp"
#include "glopt/spline.hpp"

namespace glopt {

struct ModelConfig {
  int d_model = 128;
  int d_edv = 64;
  int iter_hidden = 256;
  int t_max = 40;
  double stop_tau = 1e-5;
  int n_samples = 40;
  /// > 0 runs exactly this many Iterator steps with the stop test disabled.
  int fixed_unroll = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Per-sample model inputs, all of length n.
struct ModelInputs {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> dys;  // spline derivative at xs
  std::vector<double> cs;   // interior spline coefficients 1..n
  double x0 = 0.0;          // spline grid argmin

  std::size_t size() const noexcept { return xs.size(); }
  void validate() const;
};

/// Fits the interpolating spline to the samples and derives y', c and x0.
ModelInputs make_inputs(const NoisySamples& samples, const GridSpec& grid = GridSpec(kOracleGrid));

enum class StopReason { kConverged, kMaxIters, kFixedUnroll };
std::string to_string(StopReason r);

struct StepRecord {
  int t = 0;
  double x = 0.0;  // x_t
  double s = 0.0;
  double d = 0.0;
  double x_next = 0.0;
};

struct Trajectory {
  double x0 = 0.0;
  std::vector<StepRecord> steps;
  StopReason stop_reason = StopReason::kMaxIters;
  double x_final = 0.0;

  /// x_0, x_1, ..., x_T.
  std::vector<double> positions() const;
};

struct ParamCounts {
  std::size_t main_encoder = 0;
  std::size_t iterator = 0;
  std::size_t updater = 0;
  std::size_t total = 0;
};

/// Component counts published alongside the architecture description.
inline constexpr ParamCounts kPublishedCounts{687232, 84225, 519389, 1290846};

namespace detail {

struct LinearIdx {
  std::size_t w = 0;
  std::size_t b = 0;
};

struct CubicIdx {
  std::size_t log_alpha = 0;
  std::size_t log_beta = 0;
  std::size_t log_gamma = 0;
};

struct DenseCubicIdx {
  LinearIdx lin;
  CubicIdx act;
};

struct UNetIdx {
  DenseCubicIdx enc1, enc2, enc3, bottleneck, dec1, dec2, dec3, final_proj;
};

struct PoolIdx {
  DenseCubicIdx global, focus, local;
};

struct Layout {
  std::array<DenseCubicIdx, 4> modality;  // x, y, dy, c
  UNetIdx main_unet;
  PoolIdx main_pool;
  LinearIdx main_edv;
  LinearIdx main_delta;

  DenseCubicIdx iter_hidden;
  LinearIdx iter_dir;
  LinearIdx iter_step;

  DenseCubicIdx upd_expand;
  UNetIdx upd_decomp_unet;
  std::array<DenseCubicIdx, 4> upd_modifier;  // x, y, dy, c
  UNetIdx upd_reenc_unet;
  PoolIdx upd_pool;
  LinearIdx upd_edv;
};

}  // namespace detail

template <typename T>
struct EncodingVars {
  ad::Var<T> e;      // 1 x d_edv
  ad::Var<T> delta;  // 1 x 1
};

template <typename T>
struct StepVars {
  ad::Var<T> x_next;
  ad::Var<T> s;
  ad::Var<T> d;
};

/// Trajectory plus the tape handles of x_1..x_T (for the loss).
template <typename T>
struct GraphTrajectory {
  Trajectory values;
  std::vector<ad::Var<T>> xs;
};

template <typename T>
class Model {
 public:
  explicit Model(ModelConfig cfg = {}, std::uint64_t init_seed = 0);

  const ModelConfig& config() const noexcept { return cfg_; }
  ad::ParamStore<T>& params() noexcept { return params_; }
  const ad::ParamStore<T>& params() const noexcept { return params_; }
  const detail::Layout& layout() const noexcept { return layout_; }

  /// Fan-in uniform weights in +-1/sqrt(fan_in), zero biases, StableCubic
  /// logs at log 0.1 / log 0.01 / log 0.001. Deterministic in the seed.
  void initialize(std::uint64_t seed);

  ParamCounts param_count() const;

  // Graph builders. Every stage checks its output for non-finite values and
  // throws NumericError naming the stage (and iteration when known).
  EncodingVars<T> encode(ad::Tape<T>& tape, const ModelInputs& in) const;
  StepVars<T> iterate_step(ad::Tape<T>& tape, ad::Var<T> e, ad::Var<T> x_t, ad::Var<T> delta_prev,
                           int iteration = -1) const;
  /// Tiles to `rows` samples. Every tiled row is identical and stays
  /// identical through the row-wise layers, so rows = 1 gives the same
  /// result as rows = n at a fraction of the cost.
  ad::Var<T> update_encoding(ad::Tape<T>& tape, ad::Var<T> e, ad::Var<T> x_next, ad::Var<T> s, ad::Index rows,
                             int iteration = -1) const;
  GraphTrajectory<T> run_graph(ad::Tape<T>& tape, const ModelInputs& in, bool collapse_updater = true) const;

  /// Forward pass without keeping the graph for the caller.
  Trajectory run(const ModelInputs& in) const;

  /// Values-only helpers for one stage.
  std::pair<std::vector<double>, double> encode_values(const ModelInputs& in) const;

  template <typename U>
  Model<U> cast() const;

 private:
  ad::Var<T> dense_cubic(ad::Tape<T>& tape, ad::Var<T> x, const detail::DenseCubicIdx& l) const;
  ad::Var<T> linear(ad::Tape<T>& tape, ad::Var<T> x, const detail::LinearIdx& l) const;
  ad::Var<T> unet(ad::Tape<T>& tape, ad::Var<T> x, const detail::UNetIdx& u) const;
  ad::Var<T> pool(ad::Tape<T>& tape, ad::Var<T> f, const detail::PoolIdx& p) const;

  ModelConfig cfg_;
  ad::ParamStore<T> params_;
  detail::Layout layout_;
};

extern template class Model<float>;
extern template class Model<double>;

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out(cfg_);
  for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i].value = params_[i].value.template cast<U>();
  return out;
}

}  // namespace glopt

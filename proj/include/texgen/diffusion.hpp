#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texgen/autograd.hpp"
#include "texgen/net.hpp"
#include "texgen/uvgeom.hpp"

namespace texgen::diffusion {

using ag::Tensor;

inline constexpr int kMaxTimestep = 1000;

// ---------------------------------------------------------------------------
// Noise schedule

/// Tables indexed by t in {0..1000}.
struct Scheduler {
    std::vector<double> base_alpha_bar;  // before the zero-terminal rescale
    std::vector<double> alpha_bar;
    std::vector<double> lambda;          // soft-min-SNR loss weight

    /// sqrt(beta) linear from sqrt(0.00085) to sqrt(0.012), then sqrt(alpha_bar)
    /// shifted and scaled so t = 1000 is pure noise while t = 0 is unchanged.
    static Scheduler build(double snr_gamma = 5.0, bool terminal_weight_floor = true);

    double snr(int t) const;
    double sqrt_ab(int t) const { return std::sqrt(alpha_bar.at(t)); }
    double sqrt_1mab(int t) const { return std::sqrt(1.0 - alpha_bar.at(t)); }
};

void check_timestep(int t);

std::vector<double> add_noise(const Scheduler& s, const std::vector<double>& x0, int t,
                              const std::vector<double>& eps);
std::vector<double> v_target(const Scheduler& s, const std::vector<double>& x0, const std::vector<double>& eps,
                             int t);

struct Decomposition {
    std::vector<double> x0, eps;
};
Decomposition from_v(const Scheduler& s, const std::vector<double>& x_t, const std::vector<double>& v, int t);

std::vector<double> cfg_combine(const std::vector<double>& v_uncond, const std::vector<double>& v_cond,
                                double guidance);

// ---------------------------------------------------------------------------
// Differentiable rendering and the perceptual proxy

/// One cached view: a lookup from texture texels to image pixels plus the
/// ground-truth image seen through the same lookup.
struct RenderTarget {
    Camera camera;
    int size = 0;
    std::shared_ptr<const ag::SparseMap> lookup;  // S^2 x R^2
    std::vector<double> image;                    // S^2 x 3
};

/// Bilinear texture lookup restricted to covered texels (weights renormalized
/// over the covered taps), so renders never read the seam padding.
std::shared_ptr<const ag::SparseMap> build_lookup(const ViewRaster& raster, const Grid& mask);
RenderTarget make_render_target(const Mesh& mesh, const GeometryMaps& geometry, const Grid& texture,
                                const Camera& camera);
Tensor render(const Tensor& texture, const RenderTarget& view);

/// Blur (5-tap binomial) and 2x downsample of an S x S image, clamp-to-edge.
std::shared_ptr<const ag::SparseMap> pyramid_reduce(int size);

/// Pluggable image distance. Inputs are S^2 x 3, target is constant.
class PerceptualMetric {
public:
    virtual ~PerceptualMetric() = default;
    virtual Tensor operator()(const Tensor& image, const std::vector<double>& target, int size) const = 0;
};

/// Mean over pyramid levels of the mean absolute difference.
class PyramidL1 : public PerceptualMetric {
public:
    explicit PyramidL1(int levels = 3) : levels_(levels) {}
    Tensor operator()(const Tensor& image, const std::vector<double>& target, int size) const override;

private:
    int levels_;
};

// ---------------------------------------------------------------------------
// Data

/// A posed ground-truth image already projected into texture space.
struct ConditionView {
    Camera camera;
    Grid image;                     // S x S x 3
    std::vector<double> partial;    // R^2 x 3
    std::vector<double> visibility; // R^2
    std::vector<double> image_emb;
};

struct DataOptions {
    int resolution = 64;
    int condition_views = 4;
    int condition_image_size = 256;
    int render_views = 8;
    int render_size = 64;
    double camera_distance = 3.2;
    double fov = 40.0;
};

struct TrainingSample {
    std::string id;
    std::string caption;
    Mesh mesh;
    Grid texture;  // R x R x 3 as stored (may include seam padding)
    std::shared_ptr<net::SampleGeometry> geo;
    std::vector<double> x0;  // R^2 x 3, zero outside the atlas
    std::vector<ConditionView> condition_views;
    std::vector<RenderTarget> render_views;
    std::vector<double> text_emb;
};

/// Camera of the k-th conditioning view: azimuths evenly spaced with a
/// deterministic jitter, elevation alternating +-20 degrees.
Camera condition_camera(int k, const DataOptions& opts, int image_size);
Camera render_camera(int k, const DataOptions& opts);

ConditionView make_condition_view(const Mesh& mesh, const GeometryMaps& geometry, const Grid& texture,
                                  const Camera& camera, const net::ImageEmbedder& embedder);

TrainingSample prepare_sample(const std::string& id, const Mesh& mesh, const Grid& texture,
                              const std::string& caption, const net::NetConfig& cfg, const DataOptions& opts,
                              const net::ImageEmbedder& image_embedder, const net::TextEmbedder& text_embedder);

std::vector<double> atlas_target(const Grid& texture, const Grid& mask);

// ---------------------------------------------------------------------------
// Loss

struct LossWeights {
    double lambda1 = 1.0;
    double lambda2 = 0.5;
};

struct LossTerms {
    Tensor total, diff, render;
};

/// L = lambda1 * lambda_t * masked MSE(v, v_pred) + lambda2 * mean_i perceptual(render(x0_hat), I_i).
LossTerms loss_from_prediction(const Scheduler& s, const Tensor& v_pred, const std::vector<double>& x_t,
                               const std::vector<double>& x0, const std::vector<double>& eps, int t,
                               const std::vector<double>& mask, const std::vector<const RenderTarget*>& views,
                               const LossWeights& w, const PerceptualMetric& metric);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    int steps = 3000;
    int batch_size = 1;
    double lr = 1e-3;
    double min_lr_ratio = 0.05;
    int warmup_steps = 50;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.05;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;  // <= 0 disables
    double drop_prob = 0.2;
    LossWeights weights;
    int render_views = 2;  // N per step
    uint64_t seed = 0;
    int log_every = 1;
    int checkpoint_every = 500;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

/// Cosine decay after a linear warmup.
double learning_rate(const TrainConfig& cfg, int step);

class AdamW {
public:
    AdamW() = default;
    explicit AdamW(const ag::ParamStore& params);
    /// One decoupled-weight-decay Adam update of every parameter.
    void step(ag::ParamStore& params, double lr, const TrainConfig& cfg);
    int steps_taken() const { return t_; }
    std::vector<std::vector<double>>& first_moment() { return m_; }
    std::vector<std::vector<double>>& second_moment() { return v_; }
    void set_steps_taken(int t) { t_ = t; }

private:
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct StepMetrics {
    int step = 0;
    double loss = 0, l_diff = 0, l_render = 0, grad_norm = 0, lr = 0;
    int t = 0;
    std::string sample_id;
    bool image_dropped = false, text_dropped = false;

    nlohmann::json to_json() const;
};

/// Per-purpose random streams of one training step.
enum class RngPurpose : uint64_t { pick = 1, timestep, noise, dropout, views };

class Trainer {
public:
    Trainer(net::TexGenNet& net, TrainConfig cfg, const Scheduler& sched,
            std::shared_ptr<const PerceptualMetric> metric = nullptr);

    /// Runs one optimizer step on a batch drawn from `data`. Throws
    /// NumericalError (with t and sample id) on a non-finite loss.
    StepMetrics step(const std::vector<TrainingSample>& data);

    int step_count() const { return step_; }
    void set_step_count(int s) { step_ = s; }
    AdamW& optimizer() { return opt_; }
    const TrainConfig& config() const { return cfg_; }

    /// The conditioning embedding used by the most recent step (for tests).
    const std::vector<double>& last_condition() const { return last_y_; }

private:
    net::TexGenNet& net_;
    TrainConfig cfg_;
    const Scheduler& sched_;
    std::shared_ptr<const PerceptualMetric> metric_;
    AdamW opt_;
    int step_ = 0;
    std::vector<double> last_y_;
};

// ---------------------------------------------------------------------------
// Checkpoints

struct CheckpointInfo {
    int step = 0;
    net::NetConfig net_config;
    TrainConfig train_config;
};

void save_checkpoint(const std::filesystem::path& path, const net::TexGenNet& net, const AdamW* opt, int step,
                     const TrainConfig& train_cfg);
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);
/// Loads parameters (and optimizer state when opt is given). Rejects a file
/// whose architecture hash differs from the network's.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, net::TexGenNet& net, AdamW* opt = nullptr);

// ---------------------------------------------------------------------------
// Sampling

struct SamplerConfig {
    int steps = 30;
    double guidance = 2.0;
    double eta = 0.0;
    uint64_t seed = 0;
    bool clamp_x0 = true;
    /// Evaluates the unconditional branch even when guidance == 1.
    bool force_unconditional = false;

    void validate() const;
    nlohmann::json to_json() const;
    static SamplerConfig from_json(const nlohmann::json& j);
};

/// Descending timesteps round(1000 - i * 1000 / steps), i = 0..steps-1.
std::vector<int> ddim_timesteps(int steps);

/// v prediction for a flattened R^2 x 3 state; conditional selects y.
using VelocityFn = std::function<std::vector<double>(const std::vector<double>& x_t, int t, bool conditional)>;
/// Called after each update with the new state and its timestep.
using StepHook = std::function<void(std::vector<double>& x, int t_next, int step_index)>;

/// Deterministic DDIM. Returns the final x0 estimate, multiplied by mask.
std::vector<double> ddim_sample(const Scheduler& s, const VelocityFn& model, const std::vector<double>& mask,
                                const SamplerConfig& cfg, const StepHook& hook = nullptr);

struct Conditioning {
    std::vector<double> partial;     // R^2 x 3
    std::vector<double> visibility;  // R^2
    std::optional<std::vector<double>> image_emb;
    std::optional<std::vector<double>> text_emb;
};

VelocityFn network_velocity(const net::TexGenNet& net, const net::SampleGeometry& geo, const Conditioning& cond);

std::vector<double> sample_texture(const Scheduler& s, const net::TexGenNet& net, const net::SampleGeometry& geo,
                                   const Conditioning& cond, const SamplerConfig& cfg,
                                   const StepHook& hook = nullptr);

}  // namespace texgen::diffusion

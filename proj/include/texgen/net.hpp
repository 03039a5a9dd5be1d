#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texgen/autograd.hpp"
#include "texgen/mesh_io.hpp"
#include "texgen/sfc.hpp"
#include "texgen/uvgeom.hpp"

namespace texgen::net {

using ag::Tensor;

enum class StageKind {
    uv,           // UV head only
    sparse_conv,  // UV head + sparse-convolution point branch
    attention,    // UV head + serialized-attention point branch
};

std::string to_string(StageKind k);
StageKind stage_kind_from_string(const std::string& s);

struct StageConfig {
    int channels = 16;
    StageKind kind = StageKind::uv;
    int point_blocks = 0;     // attention layers (attention) or sparse-conv blocks (sparse_conv)
    double grid_size = 0.0;   // pooling voxel size, world units
    int patch_size = 0;       // serialized attention patch size
};

struct NetConfig {
    std::string profile = "toy";
    std::vector<StageConfig> stages;  // exactly 5
    int cond_dim = 64;                // D_y
    int time_dim = 64;
    int image_emb_dim = 48;
    int text_emb_dim = 32;
    int norm_groups = 8;
    int head_dim = 64;                // heads = max(1, channels / head_dim)
    int mlp_ratio = 4;
    /// Zero-initializes the last conv of each UV head residual branch in
    /// addition to the gates.
    bool zero_init_final_conv = false;

    static NetConfig toy();
    static NetConfig full();
    static NetConfig for_profile(const std::string& profile);

    void validate() const;
    nlohmann::json to_json() const;
    static NetConfig from_json(const nlohmann::json& j);
    /// Fingerprint of the architecture (stored in checkpoints).
    uint64_t hash() const;
};

// ---------------------------------------------------------------------------
// Embedding providers

class ImageEmbedder {
public:
    virtual ~ImageEmbedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<double> embed(const Grid& image) const = 0;
};

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual int dim() const = 0;
    virtual std::vector<double> embed(const std::string& text) const = 0;
};

/// Average-pools an RGB image onto a cells x cells grid (default 4x4x3 = 48).
class PoolingImageEmbedder : public ImageEmbedder {
public:
    explicit PoolingImageEmbedder(int cells = 4) : cells_(cells) {}
    int dim() const override { return cells_ * cells_ * 3; }
    std::vector<double> embed(const Grid& image) const override;

private:
    int cells_;
};

/// Signed feature hashing of lowercase word tokens, L2-normalized.
class HashingTextEmbedder : public TextEmbedder {
public:
    explicit HashingTextEmbedder(int dim = 32) : dim_(dim) {}
    int dim() const override { return dim_; }
    std::vector<double> embed(const std::string& text) const override;

private:
    int dim_;
};

std::vector<double> timestep_embedding(double t, int dim);

// ---------------------------------------------------------------------------
// Geometry caches

/// Point-side structures of one hybrid stage for one mesh.
struct PointGeometry {
    int num_points = 0;                                // M'
    std::shared_ptr<const ag::SparseMap> pool;         // texels -> sparse (mean)
    std::shared_ptr<const ag::SparseMap> scatter;      // sparse -> texels
    std::shared_ptr<const ag::NeighborTable> neighbors;  // 27-voxel neighbourhood
    std::vector<std::shared_ptr<const ag::Patches>> patches;  // per curve in schedule order
};

struct StageGeometry {
    int resolution = 0;
    std::shared_ptr<const std::vector<double>> mask;
    std::shared_ptr<const ag::NeighborTable> conv;     // 3x3, stride 1
    std::shared_ptr<const ag::NeighborTable> down;     // 3x3 stride 2 from this level (unset at the last)
    std::shared_ptr<const ag::SparseMap> up;           // nearest upsample from the next level (unset at the last)
    std::optional<PointGeometry> points;
};

/// Everything the network needs about one mesh at one resolution. Built once
/// and reused across steps.
struct SampleGeometry {
    int resolution = 0;
    std::vector<GeometryMaps> levels;
    std::vector<StageGeometry> stages;
    Tensor pos_mask;  // R^2 x 4: x_pos(3), mask(1)

    static std::shared_ptr<SampleGeometry> build(const Mesh& mesh, int resolution, const NetConfig& cfg);
    static std::shared_ptr<SampleGeometry> from_levels(std::vector<GeometryMaps> levels, const NetConfig& cfg);

    const std::shared_ptr<const std::vector<double>>& mask() const { return stages[0].mask; }
};

PointGeometry build_point_geometry(const GeometryMaps& level, double grid_size, int patch_size);

// ---------------------------------------------------------------------------
// Blocks

struct Modulation {
    Tensor gamma, beta;
};

/// Gated residual: alpha * f_out + f_skip, alpha 1 x C.
Tensor fuse(const Tensor& f_out, const Tensor& alpha, const Tensor& f_skip);

/// Linear map from the activated condition to k (gamma, beta) pairs plus g
/// gates. Gate weights start at zero.
class ModulationHead {
public:
    ModulationHead(ag::ParamStore& ps, const std::string& prefix, int cond_dim, int channels, int pairs, int gates);
    /// Returns pairs then gates, each 1 x channels.
    void compute(const Tensor& y_act, std::vector<Modulation>& mods, std::vector<Tensor>& gates) const;
    int channels() const { return channels_; }

private:
    int channels_, pairs_, gates_;
    Tensor w_mod_, b_mod_, w_gate_, b_gate_;
};

class Conv3x3 {
public:
    Conv3x3() = default;
    Conv3x3(ag::ParamStore& ps, const std::string& prefix, int in, int out, bool zero_init = false);
    Tensor operator()(const Tensor& x, const std::shared_ptr<const ag::NeighborTable>& table) const;

private:
    Tensor w_, b_;
};

class Linear {
public:
    Linear() = default;
    Linear(ag::ParamStore& ps, const std::string& prefix, int in, int out, bool zero_init = false);
    Tensor operator()(const Tensor& x) const { return ag::linear(x, w_, b_); }
    const Tensor& weight() const { return w_; }
    const Tensor& bias() const { return b_; }

private:
    Tensor w_, b_;
};

/// 2x (masked GN -> modulate -> SiLU -> 3x3 conv), gated residual, masked.
class UvHeadBlock {
public:
    UvHeadBlock(ag::ParamStore& ps, const std::string& prefix, const NetConfig& cfg, int channels);
    Tensor forward(const Tensor& f, const Tensor& y_act, const StageGeometry& geo) const;

    /// Probe hook: when set, the first forward records its normalization
    /// statistics here and later forwards reuse them, so the block becomes a
    /// purely local map of its input.
    std::shared_ptr<std::vector<ag::GroupNormStats>> frozen_norm_stats;

private:
    Tensor norm(const Tensor& x, int slot, const StageGeometry& geo) const;

    int groups_;
    ModulationHead mod_;
    Conv3x3 conv1_, conv2_;
};

class PointBlock {
public:
    virtual ~PointBlock() = default;
    virtual Tensor forward(const Tensor& x, const Tensor& y_act, const PointGeometry& geo, int layer) const = 0;
};

/// sCPE -> pre-norm patch attention -> modulated MLP.
class AttentionPointBlock : public PointBlock {
public:
    AttentionPointBlock(ag::ParamStore& ps, const std::string& prefix, const NetConfig& cfg, int channels);
    Tensor forward(const Tensor& x, const Tensor& y_act, const PointGeometry& geo, int layer) const override;
    int heads() const { return heads_; }

private:
    int channels_, heads_;
    Linear cpe_down_, cpe_conv_, cpe_up_;
    ModulationHead mod_;
    Linear qkv_, proj_, mlp1_, mlp2_;
};

/// Two modulated 3^3 sparse convolutions with a gated residual.
class SparseConvPointBlock : public PointBlock {
public:
    SparseConvPointBlock(ag::ParamStore& ps, const std::string& prefix, const NetConfig& cfg, int channels);
    Tensor forward(const Tensor& x, const Tensor& y_act, const PointGeometry& geo, int layer) const override;

private:
    ModulationHead mod_;
    Linear conv1_, conv2_;
};

/// UV head followed (for hybrid stages) by the pooled 3D point branch and
/// gated fusion f_out = f_uv + alpha_point * scatter(points).
class HybridBlock {
public:
    HybridBlock(ag::ParamStore& ps, const std::string& prefix, const NetConfig& cfg, const StageConfig& stage);
    Tensor forward(const Tensor& f, const Tensor& y_act, const StageGeometry& geo) const;
    /// Point-branch output scattered back to texels (R^2 x C), for inspection.
    Tensor point_branch(const Tensor& f_uv, const Tensor& y_act, const StageGeometry& geo) const;
    const UvHeadBlock& uv_head() const { return uv_; }
    UvHeadBlock& uv_head() { return uv_; }
    bool has_point_branch() const { return !points_.empty(); }

    /// Test hook: when set, replaces the learned alpha_point gate.
    std::optional<double> alpha_point_override;

private:
    UvHeadBlock uv_;
    std::vector<std::unique_ptr<PointBlock>> points_;
    Linear gate_;  // zero-initialized alpha_point head
};

// ---------------------------------------------------------------------------
// Network

struct ConditionInputs {
    double t = 0;
    const std::vector<double>* image_emb = nullptr;  // null or dropped -> learned null embedding
    const std::vector<double>* text_emb = nullptr;
    bool drop_image = false;
    bool drop_text = false;
};

class TexGenNet {
public:
    /// shape_only builds parameter shapes without storage (for summaries).
    TexGenNet(const NetConfig& cfg, uint64_t seed, bool shape_only = false);

    const NetConfig& config() const { return cfg_; }
    ag::ParamStore& params() { return params_; }
    const ag::ParamStore& params() const { return params_; }
    size_t parameter_count() const { return params_.parameter_count(); }

    /// y = MLP_t(emb_t) + MLP_i(emb_i) + MLP_c(emb_c), 1 x cond_dim.
    Tensor embed_condition(const ConditionInputs& c) const;

    /// v prediction (R^2 x 3), zero on mask = 0 texels. x_t is R^2 x 3, x_I
    /// R^2 x 3 and vis R^2 x 1.
    Tensor forward(const Tensor& x_t, const SampleGeometry& geo, const Tensor& x_I, const Tensor& vis,
                   const Tensor& y) const;

    HybridBlock& encoder_block(int stage) { return *encoder_[stage]; }
    HybridBlock& decoder_block(int stage) { return *decoder_[stage]; }

private:
    NetConfig cfg_;
    ag::ParamStore params_;
    Linear t_mlp1_, t_mlp2_, i_mlp1_, i_mlp2_, c_mlp1_, c_mlp2_;
    Tensor null_image_, null_text_;
    Conv3x3 stem_;
    std::vector<std::unique_ptr<HybridBlock>> encoder_;  // stages 0..4 (4 = bottleneck)
    std::vector<std::unique_ptr<HybridBlock>> decoder_;  // stages 0..3
    std::vector<Conv3x3> down_, up_;
    std::vector<Linear> merge_;
    Conv3x3 out_;
};

/// Human-readable per-stage summary plus total parameter count.
nlohmann::json model_summary(const NetConfig& cfg);

/// Flattens an R x R x C grid into an R^2 x C constant tensor and back.
Tensor grid_to_tensor(const Grid& g);
Grid tensor_to_grid(const Tensor& t, int resolution);

}  // namespace texgen::net

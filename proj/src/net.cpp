#include "texgen/net.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace texgen::net {

using namespace texgen::ag;

std::string to_string(StageKind k) {
    switch (k) {
        case StageKind::uv: return "uv";
        case StageKind::sparse_conv: return "sparse_conv";
        case StageKind::attention: return "attention";
    }
    return "?";
}

StageKind stage_kind_from_string(const std::string& s) {
    if (s == "uv") return StageKind::uv;
    if (s == "sparse_conv") return StageKind::sparse_conv;
    if (s == "attention") return StageKind::attention;
    throw ValidationError("unknown stage kind: " + s);
}

// ---------------------------------------------------------------------------
// Config

NetConfig NetConfig::toy() {
    NetConfig c;
    c.profile = "toy";
    // Grid sizes are scaled to the toy texel spacing (about 0.1-0.4 world
    // units per texel at 32^2 .. 8^2).
    c.stages = {
        {16, StageKind::uv, 0, 0.0, 0},
        {32, StageKind::sparse_conv, 1, 0.15, 0},
        {64, StageKind::attention, 2, 0.25, 16},
        {64, StageKind::attention, 4, 0.25, 32},
        {64, StageKind::attention, 6, 0.25, 64},
    };
    c.cond_dim = 64;
    c.time_dim = 64;
    c.image_emb_dim = 48;
    c.text_emb_dim = 32;
    c.norm_groups = 8;
    c.head_dim = 64;
    return c;
}

NetConfig NetConfig::full() {
    NetConfig c;
    c.profile = "full";
    c.stages = {
        {32, StageKind::uv, 0, 0.0, 0},
        {256, StageKind::sparse_conv, 1, 0.02, 0},
        {1024, StageKind::attention, 2, 0.05, 256},
        {1024, StageKind::attention, 4, 0.05, 512},
        {2048, StageKind::attention, 6, 0.05, 1024},
    };
    c.cond_dim = 1024;
    c.time_dim = 256;
    c.image_emb_dim = 768;
    c.text_emb_dim = 768;
    c.norm_groups = 32;
    c.head_dim = 64;
    return c;
}

NetConfig NetConfig::for_profile(const std::string& profile) {
    if (profile == "toy") return toy();
    if (profile == "full") return full();
    throw ValidationError("unknown profile: " + profile + " (expected toy or full)");
}

void NetConfig::validate() const {
    if (stages.size() != 5) throw ValidationError("net: exactly 5 stages are required");
    for (size_t s = 0; s < stages.size(); ++s) {
        const auto& st = stages[s];
        if (st.channels < 1) throw ValidationError("net: stage channels must be positive");
        if (st.kind != StageKind::uv) {
            if (st.grid_size <= 0) throw ValidationError("net: hybrid stage needs a positive grid size");
            if (st.point_blocks < 1) throw ValidationError("net: hybrid stage needs at least one point block");
        }
        if (st.kind == StageKind::attention && st.patch_size < 1)
            throw ValidationError("net: attention stage needs a patch size");
        if (st.kind == StageKind::attention && st.channels % std::max(1, st.channels / head_dim) != 0)
            throw ValidationError("net: channels must divide evenly into heads");
        if (st.kind == StageKind::attention && st.channels % 4 != 0)
            throw ValidationError("net: attention stage channels must be divisible by 4 (sCPE)");
    }
    if (cond_dim < 1 || time_dim < 2 || time_dim % 2 != 0 || image_emb_dim < 1 || text_emb_dim < 1)
        throw ValidationError("net: invalid embedding sizes");
    if (norm_groups < 1 || head_dim < 1 || mlp_ratio < 1) throw ValidationError("net: invalid block settings");
}

nlohmann::json NetConfig::to_json() const {
    nlohmann::json st = nlohmann::json::array();
    for (const auto& s : stages)
        st.push_back({{"channels", s.channels},
                      {"kind", to_string(s.kind)},
                      {"point_blocks", s.point_blocks},
                      {"grid_size", s.grid_size},
                      {"patch_size", s.patch_size}});
    nlohmann::json curves = nlohmann::json::array();
    for (int i = 0; i < 4; ++i) curves.push_back(sfc::to_string(sfc::curve_for_layer(i)));
    return {{"profile", profile},
            {"stages", st},
            {"cond_dim", cond_dim},
            {"time_dim", time_dim},
            {"image_emb_dim", image_emb_dim},
            {"text_emb_dim", text_emb_dim},
            {"norm_groups", norm_groups},
            {"head_dim", head_dim},
            {"mlp_ratio", mlp_ratio},
            {"zero_init_final_conv", zero_init_final_conv},
            {"curve_schedule", curves}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
    NetConfig c = for_profile(j.value("profile", std::string("toy")));
    try {
        if (j.contains("stages")) {
            c.stages.clear();
            for (const auto& s : j.at("stages")) {
                StageConfig sc;
                sc.channels = s.at("channels").get<int>();
                sc.kind = stage_kind_from_string(s.at("kind").get<std::string>());
                sc.point_blocks = s.value("point_blocks", 0);
                sc.grid_size = s.value("grid_size", 0.0);
                sc.patch_size = s.value("patch_size", 0);
                c.stages.push_back(sc);
            }
        }
        c.cond_dim = j.value("cond_dim", c.cond_dim);
        c.time_dim = j.value("time_dim", c.time_dim);
        c.image_emb_dim = j.value("image_emb_dim", c.image_emb_dim);
        c.text_emb_dim = j.value("text_emb_dim", c.text_emb_dim);
        c.norm_groups = j.value("norm_groups", c.norm_groups);
        c.head_dim = j.value("head_dim", c.head_dim);
        c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
        c.zero_init_final_conv = j.value("zero_init_final_conv", c.zero_init_final_conv);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("net config: ") + e.what());
    }
    c.validate();
    return c;
}

uint64_t NetConfig::hash() const { return fnv1a(to_json().dump()); }

// ---------------------------------------------------------------------------
// Embedding providers

std::vector<double> PoolingImageEmbedder::embed(const Grid& image) const {
    require(image.channels == 3 && image.height >= cells_ && image.width >= cells_,
            "image embedder: expected an RGB image at least cells x cells");
    std::vector<double> out(static_cast<size_t>(dim()), 0.0);
    for (int i = 0; i < cells_; ++i) {
        int r0 = i * image.height / cells_, r1 = (i + 1) * image.height / cells_;
        for (int j = 0; j < cells_; ++j) {
            int c0 = j * image.width / cells_, c1 = (j + 1) * image.width / cells_;
            double n = static_cast<double>(r1 - r0) * (c1 - c0);
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c)
                    for (int k = 0; k < 3; ++k) out[(i * cells_ + j) * 3 + k] += image.at(r, c, k);
            for (int k = 0; k < 3; ++k) out[(i * cells_ + j) * 3 + k] /= n;
        }
    }
    return out;
}

std::vector<double> HashingTextEmbedder::embed(const std::string& text) const {
    std::vector<double> out(static_cast<size_t>(dim_), 0.0);
    std::string token;
    auto flush = [&]() {
        if (token.empty()) return;
        uint64_t h = fnv1a(token);
        out[h % static_cast<uint64_t>(dim_)] += ((h >> 32) & 1U) ? 1.0 : -1.0;
        token.clear();
    };
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        else
            flush();
    }
    flush();
    double n = 0;
    for (double v : out) n += v * v;
    if (n > 0)
        for (double& v : out) v /= std::sqrt(n);
    return out;
}

std::vector<double> timestep_embedding(double t, int dim) {
    const int half = dim / 2;
    std::vector<double> out(static_cast<size_t>(dim));
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / half);
        out[i] = std::cos(t * freq);
        out[half + i] = std::sin(t * freq);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Geometry caches

PointGeometry build_point_geometry(const GeometryMaps& level, double grid_size, int patch_size) {
    Grid empty(level.resolution, level.resolution, 0);
    sfc::DensePointSet dense = sfc::gather_points(level.position_map, level.mask_map, empty);
    sfc::SparsePointSet sp = sfc::grid_pool(dense, grid_size);
    const int R = level.resolution;
    const int M = static_cast<int>(dense.size());
    PointGeometry pg;
    pg.num_points = static_cast<int>(sp.size());
    std::vector<std::tuple<int, int, double>> pool, scat;
    for (int i = 0; i < M; ++i) {
        int texel = dense.texel_index[i].first * R + dense.texel_index[i].second;
        int s = sp.membership[i];
        pool.emplace_back(s, texel, 1.0 / sp.counts[s]);
        scat.emplace_back(texel, s, 1.0);
    }
    pg.pool = SparseMap::from_triplets(pg.num_points, R * R, pool);
    pg.scatter = SparseMap::from_triplets(R * R, pg.num_points, scat);
    pg.neighbors = std::make_shared<NeighborTable>(pg.num_points, pg.num_points, 27, sfc::voxel_neighbors(sp));
    if (patch_size > 0) {
        const int bits = sfc::bits_for_grid(grid_size);
        for (int layer = 0; layer < 4; ++layer) {
            auto groups = sfc::partition_patches(sp, {sfc::curve_for_layer(layer), bits}, patch_size);
            pg.patches.push_back(std::make_shared<Patches>(std::move(groups)));
        }
    }
    return pg;
}

namespace {

std::shared_ptr<const SparseMap> nearest_upsample(int coarse) {
    const int fine = coarse * 2;
    std::vector<std::tuple<int, int, double>> t;
    t.reserve(static_cast<size_t>(fine) * fine);
    for (int r = 0; r < fine; ++r)
        for (int c = 0; c < fine; ++c) t.emplace_back(r * fine + c, (r / 2) * coarse + c / 2, 1.0);
    return SparseMap::from_triplets(fine * fine, coarse * coarse, t);
}

}  // namespace

std::shared_ptr<SampleGeometry> SampleGeometry::build(const Mesh& mesh, int resolution, const NetConfig& cfg) {
    require(is_power_of_two(resolution) && resolution >= 16, "geometry: resolution must be a power of two >= 16");
    return from_levels(geometry_pyramid(mesh, resolution, static_cast<int>(cfg.stages.size())), cfg);
}

std::shared_ptr<SampleGeometry> SampleGeometry::from_levels(std::vector<GeometryMaps> levels, const NetConfig& cfg) {
    require(levels.size() == cfg.stages.size(), "geometry: one level per stage is required");
    auto g = std::make_shared<SampleGeometry>();
    g->resolution = levels[0].resolution;
    for (size_t s = 0; s < levels.size(); ++s) {
        const GeometryMaps& lv = levels[s];
        require(lv.resolution == (g->resolution >> s), "geometry: levels must halve in resolution");
        StageGeometry st;
        st.resolution = lv.resolution;
        st.mask = std::make_shared<std::vector<double>>(lv.mask_map.data);
        st.conv = grid_neighbors(lv.resolution, lv.resolution, 1);
        if (s + 1 < levels.size()) {
            st.down = grid_neighbors(lv.resolution, lv.resolution, 2);
            st.up = nearest_upsample(lv.resolution / 2);
        }
        const StageConfig& sc = cfg.stages[s];
        if (sc.kind != StageKind::uv)
            st.points = build_point_geometry(lv, sc.grid_size, sc.kind == StageKind::attention ? sc.patch_size : 0);
        g->stages.push_back(std::move(st));
    }
    const int R = g->resolution;
    std::vector<double> pm(static_cast<size_t>(R) * R * 4);
    for (size_t i = 0; i < static_cast<size_t>(R) * R; ++i) {
        for (int k = 0; k < 3; ++k) pm[i * 4 + k] = levels[0].position_map.data[i * 3 + k];
        pm[i * 4 + 3] = levels[0].mask_map.data[i];
    }
    g->pos_mask = Tensor::constant(R * R, 4, std::move(pm));
    g->levels = std::move(levels);
    return g;
}

// ---------------------------------------------------------------------------
// Blocks

Linear::Linear(ParamStore& ps, const std::string& prefix, int in, int out, bool zero_init) {
    w_ = ps.create(prefix + ".w", in, out, zero_init ? Init::zeros : Init::kaiming);
    b_ = ps.create(prefix + ".b", 1, out, Init::zeros);
}

Conv3x3::Conv3x3(ParamStore& ps, const std::string& prefix, int in, int out, bool zero_init) {
    w_ = ps.create(prefix + ".w", 9 * in, out, zero_init ? Init::zeros : Init::kaiming);
    b_ = ps.create(prefix + ".b", 1, out, Init::zeros);
}

Tensor Conv3x3::operator()(const Tensor& x, const std::shared_ptr<const NeighborTable>& table) const {
    return linear(im2col(x, table), w_, b_);
}

ModulationHead::ModulationHead(ParamStore& ps, const std::string& prefix, int cond_dim, int channels, int pairs,
                               int gates)
    : channels_(channels), pairs_(pairs), gates_(gates) {
    w_mod_ = ps.create(prefix + ".mod.w", cond_dim, 2 * pairs * channels, Init::kaiming, 0.1);
    b_mod_ = ps.create(prefix + ".mod.b", 1, 2 * pairs * channels, Init::zeros);
    if (gates > 0) {
        w_gate_ = ps.create(prefix + ".gate.w", cond_dim, gates * channels, Init::zeros);
        b_gate_ = ps.create(prefix + ".gate.b", 1, gates * channels, Init::zeros);
    }
}

void ModulationHead::compute(const Tensor& y_act, std::vector<Modulation>& mods, std::vector<Tensor>& gates) const {
    Tensor m = linear(y_act, w_mod_, b_mod_);
    mods.clear();
    for (int p = 0; p < pairs_; ++p)
        mods.push_back({slice_cols(m, 2 * p * channels_, channels_), slice_cols(m, (2 * p + 1) * channels_, channels_)});
    gates.clear();
    if (gates_ > 0) {
        Tensor g = linear(y_act, w_gate_, b_gate_);
        for (int k = 0; k < gates_; ++k) gates.push_back(slice_cols(g, k * channels_, channels_));
    }
}

Tensor fuse(const Tensor& f_out, const Tensor& alpha, const Tensor& f_skip) {
    return add(f_skip, mul_row(f_out, alpha));
}

namespace {

int group_count(int channels, int groups) { return std::gcd(channels, groups); }

}  // namespace

UvHeadBlock::UvHeadBlock(ParamStore& ps, const std::string& prefix, const NetConfig& cfg, int channels)
    : groups_(group_count(channels, cfg.norm_groups)),
      mod_(ps, prefix, cfg.cond_dim, channels, 2, 1),
      conv1_(ps, prefix + ".conv1", channels, channels),
      conv2_(ps, prefix + ".conv2", channels, channels, cfg.zero_init_final_conv) {}

Tensor UvHeadBlock::norm(const Tensor& x, int slot, const StageGeometry& geo) const {
    if (!frozen_norm_stats) return group_norm(x, groups_, geo.mask);
    auto& st = *frozen_norm_stats;
    if (st.size() <= static_cast<size_t>(slot)) st.push_back(group_norm_stats(x, groups_, geo.mask));
    return group_norm_fixed(x, st[slot], geo.mask);
}

Tensor UvHeadBlock::forward(const Tensor& f, const Tensor& y_act, const StageGeometry& geo) const {
    std::vector<Modulation> mods;
    std::vector<Tensor> gates;
    mod_.compute(y_act, mods, gates);
    Tensor h = norm(f, 0, geo);
    h = mask_rows(silu(modulate(h, mods[0].gamma, mods[0].beta)), geo.mask);
    h = conv1_(h, geo.conv);
    h = norm(h, 1, geo);
    h = mask_rows(silu(modulate(h, mods[1].gamma, mods[1].beta)), geo.mask);
    h = conv2_(h, geo.conv);
    return mask_rows(fuse(h, gates[0], f), geo.mask);
}

AttentionPointBlock::AttentionPointBlock(ParamStore& ps, const std::string& prefix, const NetConfig& cfg,
                                         int channels)
    : channels_(channels),
      heads_(std::max(1, channels / cfg.head_dim)),
      cpe_down_(ps, prefix + ".cpe.down", channels, channels / 4),
      cpe_conv_(ps, prefix + ".cpe.conv", 27 * (channels / 4), channels / 4),
      cpe_up_(ps, prefix + ".cpe.up", channels / 4, channels),
      mod_(ps, prefix, cfg.cond_dim, channels, 2, 2),
      qkv_(ps, prefix + ".qkv", channels, 3 * channels),
      proj_(ps, prefix + ".proj", channels, channels),
      mlp1_(ps, prefix + ".mlp1", channels, cfg.mlp_ratio * channels),
      mlp2_(ps, prefix + ".mlp2", cfg.mlp_ratio * channels, channels) {}

Tensor AttentionPointBlock::forward(const Tensor& x_in, const Tensor& y_act, const PointGeometry& geo,
                                    int layer) const {
    // sCPE: squeeze, sparse 3^3 conv over voxel neighbours, expand.
    Tensor c = cpe_down_(x_in);
    c = cpe_conv_(im2col(c, geo.neighbors));
    Tensor x = add(x_in, cpe_up_(c));

    std::vector<Modulation> mods;
    std::vector<Tensor> gates;
    mod_.compute(y_act, mods, gates);
    Tensor h = modulate(layer_norm(x), mods[0].gamma, mods[0].beta);
    Tensor qkv = qkv_(h);
    const auto& patches = geo.patches.at(static_cast<size_t>(layer) % geo.patches.size());
    Tensor a = patch_attention(slice_cols(qkv, 0, channels_), slice_cols(qkv, channels_, channels_),
                               slice_cols(qkv, 2 * channels_, channels_), patches, heads_);
    x = fuse(proj_(a), gates[0], x);

    h = modulate(layer_norm(x), mods[1].gamma, mods[1].beta);
    h = mlp2_(silu(mlp1_(h)));
    return fuse(h, gates[1], x);
}

SparseConvPointBlock::SparseConvPointBlock(ParamStore& ps, const std::string& prefix, const NetConfig& cfg,
                                           int channels)
    : mod_(ps, prefix, cfg.cond_dim, channels, 2, 1),
      conv1_(ps, prefix + ".sconv1", 27 * channels, channels),
      conv2_(ps, prefix + ".sconv2", 27 * channels, channels) {}

Tensor SparseConvPointBlock::forward(const Tensor& x, const Tensor& y_act, const PointGeometry& geo, int) const {
    std::vector<Modulation> mods;
    std::vector<Tensor> gates;
    mod_.compute(y_act, mods, gates);
    Tensor h = silu(modulate(layer_norm(x), mods[0].gamma, mods[0].beta));
    h = conv1_(im2col(h, geo.neighbors));
    h = silu(modulate(layer_norm(h), mods[1].gamma, mods[1].beta));
    h = conv2_(im2col(h, geo.neighbors));
    return fuse(h, gates[0], x);
}

HybridBlock::HybridBlock(ParamStore& ps, const std::string& prefix, const NetConfig& cfg, const StageConfig& stage)
    : uv_(ps, prefix + ".uv", cfg, stage.channels) {
    for (int i = 0; i < stage.point_blocks && stage.kind != StageKind::uv; ++i) {
        std::string p = prefix + ".point" + std::to_string(i);
        if (stage.kind == StageKind::attention)
            points_.push_back(std::make_unique<AttentionPointBlock>(ps, p, cfg, stage.channels));
        else
            points_.push_back(std::make_unique<SparseConvPointBlock>(ps, p, cfg, stage.channels));
    }
    if (!points_.empty()) gate_ = Linear(ps, prefix + ".alpha_point", cfg.cond_dim, stage.channels, true);
}

Tensor HybridBlock::point_branch(const Tensor& f_uv, const Tensor& y_act, const StageGeometry& geo) const {
    const PointGeometry& pg = *geo.points;
    Tensor p = gather(f_uv, pg.pool);
    for (size_t i = 0; i < points_.size(); ++i) p = points_[i]->forward(p, y_act, pg, static_cast<int>(i));
    return gather(p, pg.scatter);
}

Tensor HybridBlock::forward(const Tensor& f, const Tensor& y_act, const StageGeometry& geo) const {
    Tensor f_uv = uv_.forward(f, y_act, geo);
    if (points_.empty() || !geo.points || geo.points->num_points == 0) return f_uv;
    Tensor d = point_branch(f_uv, y_act, geo);
    Tensor alpha = alpha_point_override
                       ? Tensor::constant(1, f.cols(), std::vector<double>(f.cols(), *alpha_point_override))
                       : gate_(y_act);
    return mask_rows(fuse(d, alpha, f_uv), geo.mask);
}

// ---------------------------------------------------------------------------
// Network

TexGenNet::TexGenNet(const NetConfig& cfg, uint64_t seed, bool shape_only) : cfg_(cfg), params_(seed, shape_only) {
    cfg_.validate();
    const int D = cfg_.cond_dim;
    t_mlp1_ = Linear(params_, "cond.t1", cfg_.time_dim, D);
    t_mlp2_ = Linear(params_, "cond.t2", D, D);
    i_mlp1_ = Linear(params_, "cond.i1", cfg_.image_emb_dim, D);
    i_mlp2_ = Linear(params_, "cond.i2", D, D);
    c_mlp1_ = Linear(params_, "cond.c1", cfg_.text_emb_dim, D);
    c_mlp2_ = Linear(params_, "cond.c2", D, D);
    null_image_ = params_.create("cond.null_image", 1, cfg_.image_emb_dim, Init::normal, 0.5);
    null_text_ = params_.create("cond.null_text", 1, cfg_.text_emb_dim, Init::normal, 0.5);

    const auto& st = cfg_.stages;
    stem_ = Conv3x3(params_, "stem", 11, st[0].channels);
    for (size_t s = 0; s < st.size(); ++s) {
        encoder_.push_back(std::make_unique<HybridBlock>(params_, "enc" + std::to_string(s), cfg_, st[s]));
        if (s + 1 < st.size())
            down_.emplace_back(params_, "down" + std::to_string(s), st[s].channels, st[s + 1].channels);
    }
    for (size_t s = 0; s + 1 < st.size(); ++s) {
        up_.emplace_back(params_, "up" + std::to_string(s), st[s + 1].channels, st[s].channels);
        merge_.emplace_back(params_, "merge" + std::to_string(s), 2 * st[s].channels, st[s].channels);
        decoder_.push_back(std::make_unique<HybridBlock>(params_, "dec" + std::to_string(s), cfg_, st[s]));
    }
    out_ = Conv3x3(params_, "out", st[0].channels, 3);
}

Tensor TexGenNet::embed_condition(const ConditionInputs& c) const {
    require(c.t >= 0 && c.t <= 1000, "embed_condition: t must be in [0, 1000]");
    Tensor te = Tensor::constant(1, cfg_.time_dim, timestep_embedding(c.t, cfg_.time_dim));
    Tensor y = t_mlp2_(silu(t_mlp1_(te)));
    Tensor ie = null_image_;
    if (c.image_emb && !c.drop_image) {
        require(c.image_emb->size() == static_cast<size_t>(cfg_.image_emb_dim), "embed_condition: image embedding size");
        ie = Tensor::constant(1, cfg_.image_emb_dim, *c.image_emb);
    }
    Tensor ce = null_text_;
    if (c.text_emb && !c.drop_text) {
        require(c.text_emb->size() == static_cast<size_t>(cfg_.text_emb_dim), "embed_condition: text embedding size");
        ce = Tensor::constant(1, cfg_.text_emb_dim, *c.text_emb);
    }
    y = add(y, i_mlp2_(silu(i_mlp1_(ie))));
    return add(y, c_mlp2_(silu(c_mlp1_(ce))));
}

Tensor TexGenNet::forward(const Tensor& x_t, const SampleGeometry& geo, const Tensor& x_I, const Tensor& vis,
                          const Tensor& y) const {
    const int R = geo.resolution;
    const int N = R * R;
    if (x_t.rows() != N || x_t.cols() != 3 || x_I.rows() != N || x_I.cols() != 3 || vis.rows() != N ||
        vis.cols() != 1)
        throw PreconditionError("unet_forward: inputs must match the geometry resolution " + std::to_string(R));
    require(y.rows() == 1 && y.cols() == cfg_.cond_dim, "unet_forward: condition embedding has the wrong size");
    for (double v : x_t.value())
        if (!std::isfinite(v)) throw PreconditionError("unet_forward: x_t is not finite");

    const auto& st = geo.stages;
    Tensor in = concat_cols(x_t, concat_cols(geo.pos_mask, concat_cols(x_I, vis)));
    in = mask_rows(in, st[0].mask);
    Tensor y_act = silu(y);
    Tensor h = mask_rows(stem_(in, st[0].conv), st[0].mask);

    const size_t S = cfg_.stages.size();
    std::vector<Tensor> skips(S - 1);
    for (size_t s = 0; s + 1 < S; ++s) {
        h = encoder_[s]->forward(h, y_act, st[s]);
        skips[s] = h;
        h = mask_rows(down_[s](h, st[s].down), st[s + 1].mask);
    }
    h = encoder_[S - 1]->forward(h, y_act, st[S - 1]);
    for (size_t k = S - 1; k-- > 0;) {
        Tensor u = mask_rows(up_[k](gather(h, st[k].up), st[k].conv), st[k].mask);
        h = mask_rows(merge_[k](concat_cols(u, skips[k])), st[k].mask);
        h = decoder_[k]->forward(h, y_act, st[k]);
    }
    h = mask_rows(silu(group_norm(h, group_count(cfg_.stages[0].channels, cfg_.norm_groups), st[0].mask)),
                  st[0].mask);
    return mask_rows(out_(h, st[0].conv), st[0].mask);
}

nlohmann::json model_summary(const NetConfig& cfg) {
    TexGenNet net(cfg, 0, true);
    nlohmann::json stages = nlohmann::json::array();
    std::vector<size_t> per_stage(cfg.stages.size(), 0);
    size_t cond = 0, other = 0;
    for (const auto& [name, t] : net.params().params()) {
        size_t n = t.size();
        int stage = -1;
        for (const char* pre : {"enc", "dec", "down", "up", "merge"}) {
            std::string p(pre);
            if (name.rfind(p, 0) == 0 && name.size() > p.size() && std::isdigit(static_cast<unsigned char>(name[p.size()]))) {
                stage = name[p.size()] - '0';
                break;
            }
        }
        if (stage >= 0)
            per_stage[stage] += n;
        else if (name.rfind("cond.", 0) == 0)
            cond += n;
        else
            other += n;
    }
    for (size_t s = 0; s < cfg.stages.size(); ++s) {
        const auto& sc = cfg.stages[s];
        stages.push_back({{"stage", s + 1},
                          {"channels", sc.channels},
                          {"kind", to_string(sc.kind)},
                          {"point_blocks", sc.point_blocks},
                          {"grid_size", sc.grid_size},
                          {"patch_size", sc.patch_size},
                          {"heads", std::max(1, sc.channels / cfg.head_dim)},
                          {"parameters", per_stage[s]}});
    }
    return {{"profile", cfg.profile},
            {"stages", stages},
            {"condition_parameters", cond},
            {"stem_and_head_parameters", other},
            {"total_parameters", net.parameter_count()}};
}

Tensor grid_to_tensor(const Grid& g) {
    return Tensor::constant(g.height * g.width, g.channels, g.data);
}

Grid tensor_to_grid(const Tensor& t, int resolution) {
    require(t.rows() == resolution * resolution, "tensor_to_grid: row count does not match resolution");
    Grid g(resolution, resolution, t.cols());
    g.data = t.value();
    return g;
}

}  // namespace texgen::net

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "texgen/net.hpp"

using namespace texgen;
using namespace texgen::net;
using ag::Tensor;

namespace {

std::vector<double> randn(size_t n, uint64_t seed, double s = 1.0) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = s * rng.normal();
    return v;
}

Tensor rand_tensor(int r, int c, uint64_t seed, double s = 1.0) {
    return Tensor::constant(r, c, randn(static_cast<size_t>(r) * c, seed, s));
}

void set_param(TexGenNet& net, const std::string& name, double v) {
    Tensor p = net.params().find(name);
    std::fill(p.mutable_value().begin(), p.mutable_value().end(), v);
}

void set_param_random(TexGenNet& net, const std::string& name, uint64_t seed, double s) {
    Tensor p = net.params().find(name);
    p.mutable_value() = randn(p.size(), seed, s);
}

// Opens every gate of the network so that all branches contribute.
void open_gates(TexGenNet& net, double v = 0.5) {
    for (const auto& [name, t] : net.params().params())
        if (name.find("gate.b") != std::string::npos || name.find("alpha_point.b") != std::string::npos)
            set_param(net, name, v);
}

struct Fixture {
    NetConfig cfg = NetConfig::toy();
    std::shared_ptr<SampleGeometry> geo;
    explicit Fixture(const std::string& shape = "cube", int res = 32) {
        geo = SampleGeometry::build(make_toy_shape(shape), res, cfg);
    }
};

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST(Modulate, Identities) {
    Tensor f = rand_tensor(7, 5, 1);
    Tensor zero = Tensor::zeros(1, 5);
    EXPECT_EQ(ag::modulate(f, zero, zero).value(), f.value());
    Tensor skip = rand_tensor(7, 5, 2);
    EXPECT_EQ(fuse(f, zero, skip).value(), skip.value());
    Tensor ones = Tensor::constant(3, 5, std::vector<double>(15, 1.0));
    Tensor g1 = Tensor::constant(1, 5, std::vector<double>(5, 1.0));
    Tensor doubled = ag::modulate(ones, g1, zero);
    for (double v : doubled.value()) EXPECT_EQ(v, 2.0);
    EXPECT_THROW(ag::modulate(f, Tensor::zeros(1, 4), zero), PreconditionError);
}

TEST(Config, FullProfileMatchesLayout) {
    NetConfig c = NetConfig::full();
    std::vector<int> ch;
    for (auto& s : c.stages) ch.push_back(s.channels);
    EXPECT_EQ(ch, (std::vector<int>{32, 256, 1024, 1024, 2048}));
    EXPECT_EQ(c.stages[0].kind, StageKind::uv);
    EXPECT_EQ(c.stages[1].kind, StageKind::sparse_conv);
    EXPECT_DOUBLE_EQ(c.stages[1].grid_size, 0.02);
    for (int s = 2; s < 5; ++s) {
        EXPECT_EQ(c.stages[s].kind, StageKind::attention);
        EXPECT_DOUBLE_EQ(c.stages[s].grid_size, 0.05);
    }
    EXPECT_EQ(c.stages[2].patch_size, 256);
    EXPECT_EQ(c.stages[3].patch_size, 512);
    EXPECT_EQ(c.stages[4].patch_size, 1024);
    EXPECT_EQ(c.stages[2].point_blocks, 2);
    EXPECT_EQ(c.stages[3].point_blocks, 4);
    EXPECT_EQ(c.stages[4].point_blocks, 6);
}

TEST(Config, JsonRoundTripAndHash) {
    NetConfig c = NetConfig::toy();
    NetConfig d = NetConfig::from_json(c.to_json());
    EXPECT_EQ(c.to_json(), d.to_json());
    EXPECT_EQ(c.hash(), d.hash());
    d.stages[2].patch_size = 8;
    EXPECT_NE(c.hash(), d.hash());
    auto j = c.to_json();
    j["stages"][3]["kind"] = "conv";
    EXPECT_THROW(NetConfig::from_json(j), ValidationError);
    EXPECT_THROW(NetConfig::for_profile("huge"), ValidationError);
}

TEST(Summary, ToyBudgetAndFullReport) {
    auto toy = model_summary(NetConfig::toy());
    EXPECT_LE(toy["total_parameters"].get<size_t>(), 5'000'000u);
    TexGenNet net(NetConfig::toy(), 3);
    EXPECT_EQ(toy["total_parameters"].get<size_t>(), net.parameter_count());
    auto full = model_summary(NetConfig::full());
    EXPECT_GT(full["total_parameters"].get<size_t>(), 100'000'000u);
    size_t sum = full["condition_parameters"].get<size_t>() + full["stem_and_head_parameters"].get<size_t>();
    for (auto& s : full["stages"]) sum += s["parameters"].get<size_t>();
    EXPECT_EQ(sum, full["total_parameters"].get<size_t>());
    EXPECT_EQ(full["stages"][4]["heads"], 32);
}

TEST(Condition, DropAndDeterminism) {
    TexGenNet net(NetConfig::toy(), 5);
    std::vector<double> img = randn(48, 1), txt = randn(32, 2);
    std::vector<double> img2 = randn(48, 3), txt2 = randn(32, 4);
    ConditionInputs a{300, &img, &txt, true, true};
    ConditionInputs b{300, &img2, &txt2, true, true};
    ConditionInputs c{300, nullptr, nullptr};
    auto ya = net.embed_condition(a).value();
    EXPECT_EQ(ya, net.embed_condition(b).value());
    EXPECT_EQ(ya, net.embed_condition(c).value());
    ConditionInputs full{300, &img, &txt};
    auto y1 = net.embed_condition(full).value();
    EXPECT_EQ(y1, net.embed_condition(full).value());
    EXPECT_GT(max_abs_diff(y1, ya), 1e-6);
    auto t0 = net.embed_condition({0}).value();
    auto t1 = net.embed_condition({1000}).value();
    EXPECT_GT(max_abs_diff(t0, t1), 1e-6);
    for (double v : t1) EXPECT_TRUE(std::isfinite(v));
    EXPECT_THROW(net.embed_condition({1001}), PreconditionError);
}

TEST(Condition, Embedders) {
    HashingTextEmbedder te;
    auto a = te.embed("A red Brick wall");
    EXPECT_EQ(a, te.embed("a red brick WALL!"));
    EXPECT_NE(a, te.embed("blue marble"));
    double n = 0;
    for (double v : a) n += v * v;
    EXPECT_NEAR(n, 1.0, 1e-12);
    Grid img(8, 8, 3);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) img.at(r, c, 0) = r < 4 ? 1.0 : -1.0;
    PoolingImageEmbedder ie;
    auto e = ie.embed(img);
    ASSERT_EQ(e.size(), 48u);
    EXPECT_DOUBLE_EQ(e[0], 1.0);
    EXPECT_DOUBLE_EQ(e[3 * 12], -1.0);
    auto emb = timestep_embedding(0.0, 8);
    EXPECT_EQ(emb, (std::vector<double>{1, 1, 1, 1, 0, 0, 0, 0}));
}

TEST(UvHead, ZeroInitFinalConvGivesResidual) {
    NetConfig cfg = NetConfig::toy();
    cfg.zero_init_final_conv = true;
    Fixture fx;
    ag::ParamStore ps(1);
    UvHeadBlock blk(ps, "h", cfg, 16);
    // Open the gate; the zero final conv alone must keep the block an identity.
    for (auto& [name, t] : ps.params())
        if (name.find("gate.b") != std::string::npos) {
            Tensor p = t;
            std::fill(p.mutable_value().begin(), p.mutable_value().end(), 1.0);
        }
    const auto& st = fx.geo->stages[0];
    const int N = st.resolution * st.resolution;
    Tensor y = ag::silu(rand_tensor(1, 64, 9));
    auto out = blk.forward(Tensor::zeros(N, 16), y, st).value();
    for (double v : out) EXPECT_EQ(v, 0.0);
    Tensor f = ag::mask_rows(rand_tensor(N, 16, 10), st.mask);
    EXPECT_EQ(blk.forward(f, y, st).value(), f.value());
}

TEST(UvHead, MaskedAndShapeSweep) {
    Fixture fx("sphere", 64);
    NetConfig cfg = NetConfig::toy();
    ag::ParamStore ps(2);
    for (size_t s = 0; s < fx.geo->stages.size(); ++s) {
        const auto& st = fx.geo->stages[s];
        const int C = cfg.stages[s].channels;
        UvHeadBlock blk(ps, "h" + std::to_string(s), cfg, C);
        const int N = st.resolution * st.resolution;
        Tensor f = rand_tensor(N, C, 20 + s);
        Tensor out = blk.forward(f, ag::silu(rand_tensor(1, 64, 3)), st);
        EXPECT_EQ(out.rows(), N);
        EXPECT_EQ(out.cols(), C);
        for (int r = 0; r < N; ++r)
            if ((*st.mask)[r] < 0.5)
                for (int c = 0; c < C; ++c) EXPECT_EQ(out.at(r, c), 0.0);
    }
}

namespace {

// Sparse set on a lattice so that every point has its own voxel and code.
sfc::SparsePointSet lattice_points(const std::vector<sfc::Cell>& cells, double g) {
    sfc::SparsePointSet sp;
    sp.grid_size = g;
    for (const auto& c : cells) {
        Vec3 p{-1 + g * (c[0] + 0.5), -1 + g * (c[1] + 0.5), -1 + g * (c[2] + 0.5)};
        sp.coords.push_back(p);
        sp.voxels.push_back({static_cast<int64_t>(std::floor(p.x / g)), static_cast<int64_t>(std::floor(p.y / g)),
                             static_cast<int64_t>(std::floor(p.z / g))});
        sp.counts.push_back(1);
        sp.membership.push_back(static_cast<int>(sp.membership.size()));
    }
    return sp;
}

PointGeometry point_geometry(sfc::SparsePointSet sp, int patch) {
    PointGeometry pg;
    pg.num_points = static_cast<int>(sp.size());
    pg.neighbors = std::make_shared<ag::NeighborTable>(pg.num_points, pg.num_points, 27, sfc::voxel_neighbors(sp));
    const int bits = sfc::bits_for_grid(sp.grid_size);
    for (int l = 0; l < 4; ++l)
        pg.patches.push_back(
            std::make_shared<ag::Patches>(sfc::partition_patches(sp, {sfc::curve_for_layer(l), bits}, patch)));
    return pg;
}

}  // namespace

TEST(PointBlock, PermutationEquivariance) {
    NetConfig cfg = NetConfig::toy();
    ag::ParamStore ps(4);
    AttentionPointBlock blk(ps, "p", cfg, 64);
    for (auto& [name, t] : ps.params())
        if (name.find("gate") != std::string::npos) {
            Tensor p = t;
            p.mutable_value() = randn(p.size(), 77, 0.3);
        }
    Rng rng(5);
    std::vector<sfc::Cell> cells;
    std::set<std::array<uint32_t, 3>> seen;
    while (cells.size() < 40) {
        sfc::Cell c{static_cast<uint32_t>(rng.uniform_int(0, 7)), static_cast<uint32_t>(rng.uniform_int(0, 7)),
                    static_cast<uint32_t>(rng.uniform_int(0, 7))};
        if (seen.insert(c).second) cells.push_back(c);
    }
    std::vector<int> perm(cells.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (size_t i = perm.size() - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.uniform_int(0, static_cast<int64_t>(i))]);
    std::vector<sfc::Cell> permuted(cells.size());
    for (size_t i = 0; i < cells.size(); ++i) permuted[perm[i]] = cells[i];

    const double g = 0.25;
    PointGeometry a = point_geometry(lattice_points(cells, g), 16);
    PointGeometry b = point_geometry(lattice_points(permuted, g), 16);
    const int M = static_cast<int>(cells.size());
    auto xv = randn(static_cast<size_t>(M) * 64, 6);
    std::vector<double> xp(xv.size());
    for (int i = 0; i < M; ++i) std::copy_n(xv.begin() + i * 64, 64, xp.begin() + perm[i] * 64);
    Tensor y = ag::silu(rand_tensor(1, 64, 7));
    for (int layer = 0; layer < 4; ++layer) {
        auto oa = blk.forward(Tensor::constant(M, 64, xv), y, a, layer);
        auto ob = blk.forward(Tensor::constant(M, 64, xp), y, b, layer);
        double err = 0;
        for (int i = 0; i < M; ++i)
            for (int c = 0; c < 64; ++c) err = std::max(err, std::abs(oa.at(i, c) - ob.at(perm[i], c)));
        EXPECT_LE(err, 1e-5) << "layer " << layer;
    }
}

TEST(PointBlock, SingletonAndWeights) {
    NetConfig cfg = NetConfig::toy();
    ag::ParamStore ps(8);
    AttentionPointBlock blk(ps, "p", cfg, 64);
    PointGeometry pg = point_geometry(lattice_points({{3, 3, 3}}, 0.25), 16);
    Tensor x = rand_tensor(1, 64, 11);
    Tensor y = ag::silu(rand_tensor(1, 64, 12));
    // Gates start at zero: the attention and MLP paths vanish, only sCPE remains.
    auto out = blk.forward(x, y, pg, 0);
    EXPECT_EQ(out.rows(), 1);
    auto w = ag::patch_attention_weights(rand_tensor(1, 64, 1), rand_tensor(1, 64, 2), {0}, 1, 0);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0], 1.0);
    Tensor v = rand_tensor(1, 64, 3);
    auto patches = std::make_shared<ag::Patches>(ag::Patches{{0}});
    EXPECT_EQ(ag::patch_attention(rand_tensor(1, 64, 4), rand_tensor(1, 64, 5), v, patches, 1).value(), v.value());

    std::vector<int> patch(20);
    std::iota(patch.begin(), patch.end(), 0);
    Tensor q = rand_tensor(20, 64, 13), k = rand_tensor(20, 64, 14);
    auto ws = ag::patch_attention_weights(q, k, patch, 2, 1);
    for (int i = 0; i < 20; ++i) {
        double s = 0;
        for (int j = 0; j < 20; ++j) s += ws[i * 20 + j];
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(Hybrid, AlphaZeroAndEmptyMask) {
    Fixture fx;
    NetConfig cfg = fx.cfg;
    TexGenNet net(cfg, 9);
    open_gates(net);
    HybridBlock& blk = net.encoder_block(2);
    const auto& st = fx.geo->stages[2];
    const int N = st.resolution * st.resolution;
    Tensor f = ag::mask_rows(rand_tensor(N, 64, 1), st.mask);
    Tensor y = ag::silu(rand_tensor(1, 64, 2));
    auto uv = blk.uv_head().forward(f, y, st).value();
    EXPECT_GT(max_abs_diff(blk.forward(f, y, st).value(), uv), 1e-6);
    blk.alpha_point_override = 0.0;
    EXPECT_EQ(blk.forward(f, y, st).value(), uv);
    blk.alpha_point_override.reset();

    // An atlas with no covered texels has no points.
    std::vector<GeometryMaps> levels = fx.geo->levels;
    for (auto& lv : levels) {
        std::fill(lv.mask_map.data.begin(), lv.mask_map.data.end(), 0.0);
    }
    auto empty = SampleGeometry::from_levels(levels, cfg);
    const auto& est = empty->stages[2];
    EXPECT_EQ(est.points->num_points, 0);
    EXPECT_EQ(blk.forward(f, y, est).value(), blk.uv_head().forward(f, y, est).value());
}

TEST(Hybrid, CrossIslandFlowRequiresPointBranch) {
    // Cube atlas: faces are separate UV islands that meet along 3D edges.
    Fixture fx("cube", 64);
    TexGenNet net(fx.cfg, 10);
    open_gates(net);
    HybridBlock& blk = net.encoder_block(1);
    const auto& st = fx.geo->stages[1];
    const int R = st.resolution;
    const int N = R * R;
    const PointGeometry& pg = *st.points;

    // Find two texels pooled into the same voxel but at least 8 texels apart in UV.
    int ta = -1, tb = -1;
    for (int s = 0; s < pg.num_points && ta < 0; ++s) {
        std::vector<int> members;
        for (int k = pg.pool->row_ptr()[s]; k < pg.pool->row_ptr()[s + 1]; ++k) members.push_back(pg.pool->src()[k]);
        for (int a : members)
            for (int b : members)
                if (ta < 0 && std::max(std::abs(a / R - b / R), std::abs(a % R - b % R)) >= 8) {
                    ta = a;
                    tb = b;
                }
    }
    ASSERT_GE(ta, 0) << "fixture has no voxel straddling two islands";

    // Group statistics pool over every covered texel, a global channel that
    // is not a receptive field; hold them fixed for the probe.
    blk.uv_head().frozen_norm_stats = std::make_shared<std::vector<ag::GroupNormStats>>();
    Tensor y = ag::silu(rand_tensor(1, 64, 3));
    auto f0 = ag::mask_rows(rand_tensor(N, 32, 4), st.mask).value();
    auto f1 = f0;
    for (int c = 0; c < 32; ++c) f1[static_cast<size_t>(ta) * 32 + c] += 1.0;
    auto run = [&](const std::vector<double>& f) { return blk.forward(Tensor::constant(N, 32, f), y, st); };
    auto response = [&](const Tensor& a, const Tensor& b) {
        double m = 0;
        for (int c = 0; c < 32; ++c) m = std::max(m, std::abs(a.at(tb, c) - b.at(tb, c)));
        return m;
    };
    EXPECT_GT(response(run(f0), run(f1)), 1e-6);
    blk.alpha_point_override = 0.0;
    EXPECT_EQ(response(run(f0), run(f1)), 0.0);
}

TEST(Unet, ShapeDeterminismAndMasking) {
    Fixture fx("torus", 64);
    TexGenNet net(fx.cfg, 11);
    open_gates(net, 0.3);
    const int N = 64 * 64;
    Tensor xt = rand_tensor(N, 3, 1), xi = rand_tensor(N, 3, 2), vis = Tensor::zeros(N, 1);
    Tensor y = net.embed_condition({400});
    Tensor out = net.forward(xt, *fx.geo, xi, vis, y);
    EXPECT_EQ(out.rows(), N);
    EXPECT_EQ(out.cols(), 3);
    EXPECT_EQ(out.value(), net.forward(xt, *fx.geo, xi, vis, y).value());
    TexGenNet twin(fx.cfg, 11);
    open_gates(twin, 0.3);
    EXPECT_EQ(out.value(), twin.forward(xt, *fx.geo, xi, vis, y).value());

    // Arbitrary values on uncovered texels change nothing.
    const auto& mask = *fx.geo->mask();
    auto xv = xt.value();
    auto iv = xi.value();
    Rng rng(3);
    for (int r = 0; r < N; ++r)
        if (mask[r] < 0.5)
            for (int c = 0; c < 3; ++c) {
                xv[r * 3 + c] = 100 * rng.normal();
                iv[r * 3 + c] = 100 * rng.normal();
            }
    Tensor out2 = net.forward(Tensor::constant(N, 3, xv), *fx.geo, Tensor::constant(N, 3, iv), vis, y);
    EXPECT_EQ(out.value(), out2.value());
    for (int r = 0; r < N; ++r)
        if (mask[r] < 0.5)
            for (int c = 0; c < 3; ++c) EXPECT_EQ(out.at(r, c), 0.0);

    EXPECT_THROW(net.forward(Tensor::zeros(32 * 32, 3), *fx.geo, xi, vis, y), PreconditionError);
    xv[0] = std::nan("");
    EXPECT_THROW(net.forward(Tensor::constant(N, 3, xv), *fx.geo, xi, vis, y), PreconditionError);
}

TEST(Unet, GradientMatchesFiniteDifferences) {
    Fixture fx("capsule", 32);
    TexGenNet net(fx.cfg, 12);
    open_gates(net, 0.3);
    const int N = 32 * 32;
    const auto& mask = *fx.geo->mask();
    auto x0 = randn(static_cast<size_t>(N) * 3, 1);
    Tensor xi = rand_tensor(N, 3, 2), vis = Tensor::zeros(N, 1);
    Tensor y = net.embed_condition({250}).detach();
    auto loss_of = [&](const Tensor& xt) { return ag::mean(net.forward(xt, *fx.geo, xi, vis, y)); };
    Tensor xt = Tensor::parameter(N, 3, x0);
    ag::backward(loss_of(xt));
    std::vector<int> covered;
    for (int r = 0; r < N; ++r)
        if (mask[r] > 0.5) covered.push_back(r);
    Rng rng(4);
    const double h = 1e-5;
    for (int trial = 0; trial < 5; ++trial) {
        int r = covered[rng.uniform_int(0, static_cast<int64_t>(covered.size()) - 1)];
        int c = static_cast<int>(rng.uniform_int(0, 2));
        size_t i = static_cast<size_t>(r) * 3 + c;
        auto xp = x0, xm = x0;
        xp[i] += h;
        xm[i] -= h;
        double fd = (loss_of(Tensor::constant(N, 3, xp)).item() - loss_of(Tensor::constant(N, 3, xm)).item()) / (2 * h);
        double an = xt.grad()[i];
        EXPECT_LE(std::abs(fd - an), 1e-3 * std::max(std::abs(fd), 1e-6)) << "texel " << r << " fd " << fd << " an " << an;
    }
}

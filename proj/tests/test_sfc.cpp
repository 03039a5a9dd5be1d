#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "texgen/sfc.hpp"

using namespace texgen;
using namespace texgen::sfc;

namespace {

const Curve kAllCurves[] = {Curve::morton, Curve::hilbert, Curve::morton_transposed, Curve::hilbert_transposed};

DensePointSet make_points(const std::vector<Vec3>& coords, int channels, Rng& rng) {
    DensePointSet p;
    p.coords = coords;
    p.channels = channels;
    for (size_t i = 0; i < coords.size() * channels; ++i) p.features.push_back(rng.uniform(-1, 1));
    p.texel_index.resize(coords.size());
    return p;
}

// Six points, two voxels of three (grid 0.5).
DensePointSet six_points() {
    DensePointSet p;
    p.coords = {{0.1, 0.1, 0.1}, {0.6, 0.1, 0.1}, {0.2, 0.3, 0.4}, {0.7, 0.2, 0.3}, {0.4, 0.4, 0.1}, {0.9, 0.4, 0.4}};
    p.channels = 2;
    p.features = {1, 2, 10, 20, 3, 5, 30, 50, 8, -1, 20, 0};
    p.texel_index.resize(6);
    return p;
}

}  // namespace

TEST(Curve, MortonExamples) {
    EXPECT_EQ(encode_curve({0, 0, 0}, {Curve::morton, 1}), 0u);
    EXPECT_EQ(encode_curve({1, 1, 1}, {Curve::morton, 1}), 7u);
    EXPECT_EQ(encode_curve({1, 0, 0}, {Curve::morton, 1}), 4u);
    EXPECT_EQ(encode_curve({0, 0, 1}, {Curve::morton, 1}), 1u);
}

TEST(Curve, RejectsOutOfRangeCells) {
    EXPECT_THROW(encode_curve({4, 0, 0}, {Curve::hilbert, 2}), PreconditionError);
    EXPECT_THROW(encode_curve({0, 0, 0}, {Curve::hilbert, 0}), PreconditionError);
    EXPECT_THROW(encode_curve({0, 0, 0}, {Curve::hilbert, 22}), PreconditionError);
}

TEST(Curve, ExhaustiveBijectionUpTo4Bits) {
    for (Curve c : kAllCurves) {
        for (int bits = 1; bits <= 4; ++bits) {
            const uint32_t n = 1U << bits;
            std::vector<char> seen(size_t{1} << (3 * bits), 0);
            for (uint32_t x = 0; x < n; ++x)
                for (uint32_t y = 0; y < n; ++y)
                    for (uint32_t z = 0; z < n; ++z) {
                        uint64_t code = encode_curve({x, y, z}, {c, bits});
                        ASSERT_LT(code, seen.size());
                        ASSERT_FALSE(seen[code]) << to_string(c) << " bits " << bits;
                        seen[code] = 1;
                        Cell back = decode_curve(code, {c, bits});
                        ASSERT_EQ(back, (Cell{x, y, z}));
                    }
        }
    }
}

TEST(Curve, HilbertConsecutiveCodesAreAdjacent) {
    for (Curve c : {Curve::hilbert, Curve::hilbert_transposed}) {
        for (int bits = 1; bits <= 3; ++bits) {
            const uint64_t total = uint64_t{1} << (3 * bits);
            for (uint64_t k = 0; k + 1 < total; ++k) {
                Cell a = decode_curve(k, {c, bits}), b = decode_curve(k + 1, {c, bits});
                uint32_t cheb = 0;
                for (int i = 0; i < 3; ++i) cheb = std::max(cheb, a[i] > b[i] ? a[i] - b[i] : b[i] - a[i]);
                ASSERT_EQ(cheb, 1u) << "code " << k;
            }
        }
    }
}

TEST(Curve, TransposedPermutesAxes) {
    for (uint32_t x = 0; x < 4; ++x)
        for (uint32_t y = 0; y < 4; ++y)
            for (uint32_t z = 0; z < 4; ++z) {
                EXPECT_EQ(encode_curve({x, y, z}, {Curve::morton_transposed, 2}),
                          encode_curve({y, z, x}, {Curve::morton, 2}));
                EXPECT_EQ(encode_curve({x, y, z}, {Curve::hilbert_transposed, 2}),
                          encode_curve({y, z, x}, {Curve::hilbert, 2}));
            }
}

TEST(Curve, LayerScheduleAlternates) {
    EXPECT_EQ(curve_for_layer(0), Curve::hilbert);
    EXPECT_EQ(curve_for_layer(1), Curve::hilbert_transposed);
    EXPECT_EQ(curve_for_layer(2), Curve::morton);
    EXPECT_EQ(curve_for_layer(3), Curve::morton_transposed);
    EXPECT_EQ(curve_for_layer(4), Curve::hilbert);
}

TEST(Quantize, CellWidthAndClamp) {
    EXPECT_EQ(quantize({-1, -1, -1}, 3), (Cell{0, 0, 0}));
    EXPECT_EQ(quantize({1, 1, 1}, 3), (Cell{7, 7, 7}));
    EXPECT_EQ(quantize({-0.76, 0.0, 0.26}, 3), (Cell{0, 4, 5}));
    EXPECT_EQ(bits_for_grid(0.02), 7);
    EXPECT_EQ(bits_for_grid(0.05), 5);
}

TEST(GridPool, AllInOneVoxelGivesGlobalMean) {
    Rng rng(1);
    DensePointSet p = make_points({{0.01, 0.02, 0.03}, {0.04, 0.01, 0.02}, {0.09, 0.09, 0.09}}, 3, rng);
    SparsePointSet sp = grid_pool(p, 0.1);
    ASSERT_EQ(sp.size(), 1u);
    for (int c = 0; c < 3; ++c) {
        double mean = (p.features[c] + p.features[3 + c] + p.features[6 + c]) / 3.0;
        EXPECT_NEAR(sp.features[c], mean, 1e-15);
    }
}

TEST(GridPool, FineGridIsIdentity) {
    Rng rng(2);
    std::vector<Vec3> coords;
    for (int i = 0; i < 50; ++i) coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    DensePointSet p = make_points(coords, 4, rng);
    SparsePointSet sp = grid_pool(p, 1e-4);
    ASSERT_EQ(sp.size(), p.size());
    EXPECT_EQ(scatter(sp), p.features);
}

TEST(GridPool, SixPointFixture) {
    SparsePointSet sp = grid_pool(six_points(), 0.5);
    ASSERT_EQ(sp.size(), 2u);
    // Voxel of point 0 holds points 0, 2, 4; the other holds 1, 3, 5.
    EXPECT_EQ(sp.membership, (std::vector<int>{0, 1, 0, 1, 0, 1}));
    EXPECT_DOUBLE_EQ(sp.features[0], 4.0);
    EXPECT_DOUBLE_EQ(sp.features[1], 2.0);
    EXPECT_DOUBLE_EQ(sp.features[2], 20.0);
    EXPECT_NEAR(sp.features[3], 70.0 / 3.0, 1e-12);
    EXPECT_NEAR(sp.coords[0].x, (0.1 + 0.2 + 0.4) / 3, 1e-12);
    std::vector<double> dense = scatter(sp);
    EXPECT_EQ(dense[4], sp.features[0]);
    EXPECT_EQ(dense[11], sp.features[3]);
}

TEST(GridPool, MassConservationProperty) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec3> coords;
        int n = 50 + trial * 20;
        for (int i = 0; i < n; ++i) coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        DensePointSet p = make_points(coords, 5, rng);
        SparsePointSet sp = grid_pool(p, rng.uniform(0.05, 0.8));
        for (int c = 0; c < 5; ++c) {
            double dense = 0, sparse = 0, scale = 0;
            for (int i = 0; i < n; ++i) {
                dense += p.features[i * 5 + c];
                scale += std::abs(p.features[i * 5 + c]);
            }
            for (size_t s = 0; s < sp.size(); ++s) sparse += sp.features[s * 5 + c] * sp.counts[s];
            EXPECT_LE(std::abs(dense - sparse), 1e-5 * scale);
        }
        // Points sharing a cell share a sparse index.
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                bool same_cell = true;
                for (int k = 0; k < 3; ++k)
                    same_cell &= std::floor(coords[i][k] / sp.grid_size) == std::floor(coords[j][k] / sp.grid_size);
                ASSERT_EQ(same_cell, sp.membership[i] == sp.membership[j]);
            }
    }
}

TEST(GridPool, ScatterPoolIsIdempotent) {
    Rng rng(4);
    std::vector<Vec3> coords;
    for (int i = 0; i < 200; ++i) coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    DensePointSet p = make_points(coords, 3, rng);
    SparsePointSet once = grid_pool(p, 0.4);
    DensePointSet p2 = p;
    p2.features = scatter(once);
    SparsePointSet twice = grid_pool(p2, 0.4);
    EXPECT_EQ(scatter(twice), scatter(once));

    // Exactly on the fixture as well.
    DensePointSet six = six_points();
    SparsePointSet a = grid_pool(six, 0.5);
    six.features = scatter(a);
    EXPECT_EQ(scatter(grid_pool(six, 0.5)), scatter(a));
}

TEST(Partition, SizesAndCoverage) {
    std::vector<uint64_t> codes{9, 3, 7, 1, 0, 8, 2, 6, 4, 5};
    auto groups = partition_by_codes(codes, 4);
    ASSERT_EQ(groups.size(), 3u);
    EXPECT_EQ(groups[0].size(), 4u);
    EXPECT_EQ(groups[1].size(), 4u);
    EXPECT_EQ(groups[2].size(), 2u);
    EXPECT_EQ(groups[0], (std::vector<int>{4, 3, 6, 1}));
    EXPECT_EQ(partition_by_codes(codes, 10).size(), 1u);
    EXPECT_EQ(partition_by_codes(codes, 50).size(), 1u);
    EXPECT_THROW(partition_by_codes(codes, 0), PreconditionError);
}

TEST(Partition, TiesKeepOriginalOrder) {
    auto groups = partition_by_codes({5, 1, 5, 1}, 4);
    EXPECT_EQ(groups[0], (std::vector<int>{1, 3, 0, 2}));
}

TEST(Partition, IsAPermutationForBothCurves) {
    Rng rng(5);
    std::vector<Vec3> coords;
    for (int i = 0; i < 100; ++i) coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    DensePointSet p = make_points(coords, 1, rng);
    SparsePointSet sp = grid_pool(p, 1e-4);
    for (Curve c : kAllCurves) {
        auto groups = partition_patches(sp, {c, 5}, 16);
        std::vector<int> all;
        uint64_t last = 0;
        for (const auto& g : groups)
            for (int i : g) {
                all.push_back(i);
                ASSERT_GE(sp.codes[i], last);
                last = sp.codes[i];
            }
        std::sort(all.begin(), all.end());
        std::vector<int> expect(100);
        std::iota(expect.begin(), expect.end(), 0);
        EXPECT_EQ(all, expect);
    }
}

TEST(VoxelNeighbors, MatchBruteForce) {
    Rng rng(6);
    std::vector<Vec3> coords;
    for (int i = 0; i < 300; ++i) coords.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    DensePointSet p = make_points(coords, 1, rng);
    SparsePointSet sp = grid_pool(p, 0.3);
    std::vector<int> nb = voxel_neighbors(sp);
    for (size_t s = 0; s < sp.size(); ++s) {
        EXPECT_EQ(nb[s * 27 + 13], static_cast<int>(s));
        for (size_t t = 0; t < sp.size(); ++t) {
            const auto& a = sp.voxels[s];
            const auto& b = sp.voxels[t];
            int64_t dx = b[0] - a[0], dy = b[1] - a[1], dz = b[2] - a[2];
            if (std::abs(dx) > 1 || std::abs(dy) > 1 || std::abs(dz) > 1) continue;
            EXPECT_EQ(nb[s * 27 + (dx + 1) * 9 + (dy + 1) * 3 + (dz + 1)], static_cast<int>(t));
        }
    }
}

#include "texgen/sfc.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>

namespace texgen::sfc {

std::string to_string(Curve c) {
    switch (c) {
        case Curve::morton: return "morton";
        case Curve::hilbert: return "hilbert";
        case Curve::morton_transposed: return "morton_transposed";
        case Curve::hilbert_transposed: return "hilbert_transposed";
    }
    return "?";
}

namespace {

void check_kind(const CurveKind& kind) {
    require(kind.bits_per_axis >= 1 && kind.bits_per_axis <= 21, "curve: bits_per_axis must be in [1, 21]");
}

bool transposed(Curve c) { return c == Curve::morton_transposed || c == Curve::hilbert_transposed; }
bool hilbert(Curve c) { return c == Curve::hilbert || c == Curve::hilbert_transposed; }

uint64_t interleave(const Cell& x, int bits) {
    uint64_t code = 0;
    for (int b = bits - 1; b >= 0; --b) {
        for (int i = 0; i < 3; ++i) code = (code << 1) | ((x[i] >> b) & 1U);
    }
    return code;
}

Cell deinterleave(uint64_t code, int bits) {
    Cell x{0, 0, 0};
    for (int b = 0; b < bits; ++b) {
        for (int i = 2; i >= 0; --i) {
            x[i] |= static_cast<uint32_t>(code & 1U) << b;
            code >>= 1;
        }
    }
    return x;
}

// Skilling, "Programming the Hilbert curve" (AIP Conf. Proc. 707, 2004).
void axes_to_transpose(Cell& x, int bits) {
    const uint32_t m = 1U << (bits - 1);
    for (uint32_t q = m; q > 1; q >>= 1) {
        uint32_t p = q - 1;
        for (int i = 0; i < 3; ++i) {
            if (x[i] & q) {
                x[0] ^= p;
            } else {
                uint32_t t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
    }
    for (int i = 1; i < 3; ++i) x[i] ^= x[i - 1];
    uint32_t t = 0;
    for (uint32_t q = m; q > 1; q >>= 1)
        if (x[2] & q) t ^= q - 1;
    for (int i = 0; i < 3; ++i) x[i] ^= t;
}

void transpose_to_axes(Cell& x, int bits) {
    const uint32_t n = 2U << (bits - 1);
    uint32_t t = x[2] >> 1;
    for (int i = 2; i > 0; --i) x[i] ^= x[i - 1];
    x[0] ^= t;
    for (uint32_t q = 2; q != n; q <<= 1) {
        uint32_t p = q - 1;
        for (int i = 2; i >= 0; --i) {
            if (x[i] & q) {
                x[0] ^= p;
            } else {
                uint32_t t2 = (x[0] ^ x[i]) & p;
                x[0] ^= t2;
                x[i] ^= t2;
            }
        }
    }
}

}  // namespace

uint64_t encode_curve(const Cell& cell, const CurveKind& kind) {
    check_kind(kind);
    const uint32_t limit = 1U << kind.bits_per_axis;
    require(cell[0] < limit && cell[1] < limit && cell[2] < limit, "encode_curve: cell outside lattice");
    Cell x = transposed(kind.curve) ? Cell{cell[1], cell[2], cell[0]} : cell;
    if (hilbert(kind.curve)) axes_to_transpose(x, kind.bits_per_axis);
    return interleave(x, kind.bits_per_axis);
}

Cell decode_curve(uint64_t code, const CurveKind& kind) {
    check_kind(kind);
    require(kind.bits_per_axis == 21 || code < (uint64_t{1} << (3 * kind.bits_per_axis)),
            "decode_curve: code outside range");
    Cell x = deinterleave(code, kind.bits_per_axis);
    if (hilbert(kind.curve)) transpose_to_axes(x, kind.bits_per_axis);
    return transposed(kind.curve) ? Cell{x[2], x[0], x[1]} : x;
}

Curve curve_for_layer(int layer) {
    static constexpr Curve order[4] = {Curve::hilbert, Curve::hilbert_transposed, Curve::morton,
                                       Curve::morton_transposed};
    return order[layer % 4];
}

Cell quantize(const Vec3& p, int bits) {
    const double width = 2.0 / static_cast<double>(uint64_t{1} << bits);
    const int64_t hi = (int64_t{1} << bits) - 1;
    Cell c{};
    for (int i = 0; i < 3; ++i) {
        auto v = static_cast<int64_t>(std::floor((p[i] + 1.0) / width));
        c[i] = static_cast<uint32_t>(std::clamp<int64_t>(v, 0, hi));
    }
    return c;
}

int bits_for_grid(double grid_size) {
    require(grid_size > 0, "bits_for_grid: grid_size must be positive");
    int bits = static_cast<int>(std::lround(std::log2(2.0 / grid_size)));
    return std::clamp(bits, 1, 21);
}

DensePointSet gather_points(const Grid& position_map, const Grid& mask_map, const Grid& features) {
    require(position_map.texels() == mask_map.texels() && features.texels() == mask_map.texels(),
            "gather_points: map sizes differ");
    DensePointSet pts;
    pts.channels = features.channels;
    for (int r = 0; r < mask_map.height; ++r) {
        for (int c = 0; c < mask_map.width; ++c) {
            size_t idx = static_cast<size_t>(r) * mask_map.width + c;
            if (mask_map.data[idx] < 0.5) continue;
            pts.coords.push_back({position_map.data[idx * 3], position_map.data[idx * 3 + 1],
                                  position_map.data[idx * 3 + 2]});
            pts.texel_index.emplace_back(r, c);
            for (int ch = 0; ch < features.channels; ++ch)
                pts.features.push_back(features.data[idx * features.channels + ch]);
        }
    }
    return pts;
}

namespace {

struct CellHash {
    size_t operator()(const std::array<int64_t, 3>& c) const {
        uint64_t h = Rng::splitmix(static_cast<uint64_t>(c[0]));
        h = Rng::splitmix(h ^ static_cast<uint64_t>(c[1]));
        return Rng::splitmix(h ^ static_cast<uint64_t>(c[2]));
    }
};

}  // namespace

SparsePointSet grid_pool(const DensePointSet& points, double grid_size) {
    require(grid_size > 0, "grid_pool: grid_size must be positive");
    SparsePointSet sp;
    sp.grid_size = grid_size;
    sp.channels = points.channels;
    const size_t C = points.channels;
    std::unordered_map<std::array<int64_t, 3>, int, CellHash> index;
    sp.membership.resize(points.size());
    std::vector<Vec3> coord_sum;
    // deviations from the voxel's first member: a voxel of equal values pools
    // back to exactly that value, which plain sum / n does not guarantee
    std::vector<double> feat_ref, feat_dev;
    for (size_t i = 0; i < points.size(); ++i) {
        const Vec3& p = points.coords[i];
        std::array<int64_t, 3> cell{static_cast<int64_t>(std::floor(p.x / grid_size)),
                                    static_cast<int64_t>(std::floor(p.y / grid_size)),
                                    static_cast<int64_t>(std::floor(p.z / grid_size))};
        auto [it, inserted] = index.try_emplace(cell, static_cast<int>(sp.voxels.size()));
        if (inserted) {
            sp.voxels.push_back(cell);
            sp.counts.push_back(0);
            coord_sum.emplace_back();
            feat_dev.resize(feat_dev.size() + C, 0.0);
            feat_ref.insert(feat_ref.end(), points.features.begin() + i * C, points.features.begin() + (i + 1) * C);
        }
        int s = it->second;
        sp.membership[i] = s;
        sp.counts[s] += 1;
        coord_sum[s] += p;
        for (size_t c = 0; c < C; ++c) feat_dev[s * C + c] += points.features[i * C + c] - feat_ref[s * C + c];
    }
    sp.coords.resize(sp.voxels.size());
    sp.features.resize(sp.voxels.size() * C);
    for (size_t s = 0; s < sp.voxels.size(); ++s) {
        const double n = sp.counts[s];
        sp.coords[s] = coord_sum[s] / n;
        for (size_t c = 0; c < C; ++c) sp.features[s * C + c] = feat_ref[s * C + c] + feat_dev[s * C + c] / n;
    }
    return sp;
}

std::vector<double> scatter(const SparsePointSet& sparse) {
    const size_t C = sparse.channels;
    std::vector<double> out(sparse.membership.size() * C);
    for (size_t i = 0; i < sparse.membership.size(); ++i) {
        int s = sparse.membership[i];
        std::copy_n(sparse.features.begin() + static_cast<std::ptrdiff_t>(s * C), C,
                    out.begin() + static_cast<std::ptrdiff_t>(i * C));
    }
    return out;
}

void compute_codes(SparsePointSet& sparse, const CurveKind& kind) {
    sparse.code_kind = kind;
    sparse.codes.resize(sparse.size());
    for (size_t i = 0; i < sparse.size(); ++i)
        sparse.codes[i] = encode_curve(quantize(sparse.coords[i], kind.bits_per_axis), kind);
}

std::vector<std::vector<int>> partition_by_codes(const std::vector<uint64_t>& codes, int patch_size) {
    require(patch_size >= 1, "partition_patches: patch size must be >= 1");
    std::vector<int> order(codes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return codes[a] < codes[b]; });
    std::vector<std::vector<int>> groups;
    for (size_t start = 0; start < order.size(); start += patch_size) {
        size_t end = std::min(order.size(), start + static_cast<size_t>(patch_size));
        groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                            order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return groups;
}

std::vector<std::vector<int>> partition_patches(SparsePointSet& sparse, const CurveKind& kind, int patch_size) {
    if (sparse.codes.size() != sparse.size() || sparse.code_kind.curve != kind.curve ||
        sparse.code_kind.bits_per_axis != kind.bits_per_axis)
        compute_codes(sparse, kind);
    return partition_by_codes(sparse.codes, patch_size);
}

std::vector<int> voxel_neighbors(const SparsePointSet& sparse) {
    std::unordered_map<std::array<int64_t, 3>, int, CellHash> index;
    for (size_t s = 0; s < sparse.voxels.size(); ++s) index.emplace(sparse.voxels[s], static_cast<int>(s));
    std::vector<int> out(sparse.voxels.size() * 27, -1);
    for (size_t s = 0; s < sparse.voxels.size(); ++s) {
        int k = 0;
        for (int dx = -1; dx <= 1; ++dx) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dz = -1; dz <= 1; ++dz, ++k) {
                    const auto& v = sparse.voxels[s];
                    auto it = index.find({v[0] + dx, v[1] + dy, v[2] + dz});
                    if (it != index.end()) out[s * 27 + k] = it->second;
                }
            }
        }
    }
    return out;
}

}  // namespace texgen::sfc

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "texgen/common.hpp"

namespace texgen::sfc {

enum class Curve { morton, hilbert, morton_transposed, hilbert_transposed };

std::string to_string(Curve c);

struct CurveKind {
    Curve curve = Curve::hilbert;
    int bits_per_axis = 10;
};

using Cell = std::array<uint32_t, 3>;

/// Serialization code of a voxel cell. Injective onto [0, 2^(3*bits)).
/// Morton interleaves bits with x most significant; Hilbert uses Skilling's
/// transpose construction. Transposed variants encode (y, z, x).
uint64_t encode_curve(const Cell& cell, const CurveKind& kind);
Cell decode_curve(uint64_t code, const CurveKind& kind);

/// Axis schedule used by consecutive attention layers.
Curve curve_for_layer(int layer);

/// Cell of a point in [-1,1]^3 on a 2^bits lattice, clamped to the cube.
Cell quantize(const Vec3& p, int bits);

/// Lattice depth whose cell width (2 / 2^bits) is closest to grid_size.
int bits_for_grid(double grid_size);

struct DensePointSet {
    std::vector<Vec3> coords;
    int channels = 0;
    std::vector<double> features;  // M x channels, row-major
    std::vector<std::pair<int, int>> texel_index;  // (row, col)

    size_t size() const { return coords.size(); }
};

/// Gathers mask=1 texels (row-major order) of an R x R position/mask pair and
/// an R x R x C feature grid into a point set.
DensePointSet gather_points(const Grid& position_map, const Grid& mask_map, const Grid& features);

struct SparsePointSet {
    std::vector<Vec3> coords;         // member centroids
    int channels = 0;
    std::vector<double> features;     // M' x channels
    std::vector<uint64_t> codes;      // per sparse point, for `code_kind`
    CurveKind code_kind;
    std::vector<int> membership;      // dense index -> sparse index
    std::vector<int> counts;          // members per sparse point
    std::vector<std::array<int64_t, 3>> voxels;  // integer voxel cell per sparse point
    double grid_size = 0;

    size_t size() const { return coords.size(); }
};

/// Buckets points by floor(coord / grid_size); sparse feature and coordinate
/// are member means. Sparse indices follow first appearance in dense order.
SparsePointSet grid_pool(const DensePointSet& points, double grid_size);

/// Dense features (M x C): each dense point carries its voxel's feature.
std::vector<double> scatter(const SparsePointSet& sparse);

/// Fills `codes` for the requested curve from the sparse coordinates.
void compute_codes(SparsePointSet& sparse, const CurveKind& kind);

/// Sorts sparse indices by code (ties by index) and cuts them into
/// ceil(M'/K) contiguous groups; the last may be short.
std::vector<std::vector<int>> partition_patches(SparsePointSet& sparse, const CurveKind& kind, int patch_size);
std::vector<std::vector<int>> partition_by_codes(const std::vector<uint64_t>& codes, int patch_size);

/// For each sparse point, indices of the 27 voxel neighbours (offsets in
/// (dx, dy, dz) lexicographic order over {-1,0,1}^3), -1 where empty.
std::vector<int> voxel_neighbors(const SparsePointSet& sparse);

}  // namespace texgen::sfc

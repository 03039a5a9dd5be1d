#include "texgen/mesh_io.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "texgen/image_io.hpp"
#include "texgen/uvgeom.hpp"

namespace texgen {

namespace fs = std::filesystem;

void Mesh::validate() const {
    for (size_t f = 0; f < faces.size(); ++f) {
        for (int k = 0; k < 3; ++k) {
            if (faces[f][k] < 0 || static_cast<size_t>(faces[f][k]) >= vertices.size())
                throw ValidationError("face " + std::to_string(f) + " references missing vertex");
        }
    }
    if (face_uv_indices.size() != faces.size() && !face_uv_indices.empty())
        throw ValidationError("face_uv_indices count differs from face count");
    for (size_t f = 0; f < face_uv_indices.size(); ++f) {
        for (int k = 0; k < 3; ++k) {
            if (face_uv_indices[f][k] < 0 || static_cast<size_t>(face_uv_indices[f][k]) >= uv_coords.size())
                throw ValidationError("face " + std::to_string(f) + " references missing uv record");
        }
    }
    for (const Vec2& t : uv_coords) {
        if (!(t.u >= 0.0 && t.u <= 1.0 && t.v >= 0.0 && t.v <= 1.0))
            throw ValidationError("uv coordinate outside [0,1]^2");
    }
}

Vec3 Mesh::bbox_min() const {
    if (vertices.empty()) return {};
    Vec3 m = vertices.front();
    for (const Vec3& v : vertices) m = {std::min(m.x, v.x), std::min(m.y, v.y), std::min(m.z, v.z)};
    return m;
}

Vec3 Mesh::bbox_max() const {
    if (vertices.empty()) return {};
    Vec3 m = vertices.front();
    for (const Vec3& v : vertices) m = {std::max(m.x, v.x), std::max(m.y, v.y), std::max(m.z, v.z)};
    return m;
}

double Mesh::bounding_radius() const {
    Vec3 c = (bbox_min() + bbox_max()) * 0.5;
    double r = 0;
    for (const Vec3& v : vertices) r = std::max(r, norm(v - c));
    return r > 0 ? r : 1.0;
}

void normalize_mesh(Mesh& mesh) {
    if (mesh.vertices.empty()) return;
    Vec3 lo = mesh.bbox_min(), hi = mesh.bbox_max();
    Vec3 c = (lo + hi) * 0.5;
    double half = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z}) * 0.5;
    if (half <= 0) half = 1.0;
    for (Vec3& v : mesh.vertices) {
        v = (v - c) / half;
        // Clamp round-off so the [-1,1] contract holds exactly.
        v = {std::clamp(v.x, -1.0, 1.0), std::clamp(v.y, -1.0, 1.0), std::clamp(v.z, -1.0, 1.0)};
    }
}

namespace {

[[noreturn]] void malformed(int line_no, const std::string& line, const std::string& why) {
    throw MalformedInputError("line " + std::to_string(line_no) + ": " + why + ": '" + line + "'");
}

int resolve_index(long idx, size_t count, int line_no, const std::string& line) {
    long r = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
    if (idx == 0 || r < 0 || static_cast<size_t>(r) >= count) malformed(line_no, line, "index out of range");
    return static_cast<int>(r);
}

}  // namespace

Mesh parse_mesh(const std::string& text, bool normalize) {
    Mesh mesh;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool face_without_uv = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x >> p.y >> p.z)) malformed(line_no, line, "expected 3 coordinates");
            mesh.vertices.push_back(p);
        } else if (tag == "vt") {
            Vec2 t;
            if (!(ls >> t.u >> t.v)) malformed(line_no, line, "expected 2 uv coordinates");
            if (!(t.u >= 0 && t.u <= 1 && t.v >= 0 && t.v <= 1)) malformed(line_no, line, "uv outside [0,1]");
            mesh.uv_coords.push_back(t);
        } else if (tag == "f") {
            std::vector<int> vi, ti;
            std::string tok;
            while (ls >> tok) {
                auto slash = tok.find('/');
                try {
                    size_t used = 0;
                    long v = std::stol(tok.substr(0, slash), &used);
                    if (used != tok.substr(0, slash).size()) malformed(line_no, line, "bad vertex index");
                    vi.push_back(resolve_index(v, mesh.vertices.size(), line_no, line));
                    if (slash == std::string::npos) {
                        face_without_uv = true;
                        continue;
                    }
                    auto slash2 = tok.find('/', slash + 1);
                    std::string ts = tok.substr(slash + 1, slash2 == std::string::npos ? std::string::npos : slash2 - slash - 1);
                    if (ts.empty()) {
                        face_without_uv = true;
                        continue;
                    }
                    ti.push_back(resolve_index(std::stol(ts), mesh.uv_coords.size(), line_no, line));
                } catch (const std::invalid_argument&) {
                    malformed(line_no, line, "bad face index");
                } catch (const std::out_of_range&) {
                    malformed(line_no, line, "bad face index");
                }
            }
            if (vi.size() < 3) malformed(line_no, line, "face needs at least 3 vertices");
            for (size_t k = 1; k + 1 < vi.size(); ++k) {
                mesh.faces.push_back({vi[0], vi[k], vi[k + 1]});
                if (ti.size() == vi.size()) mesh.face_uv_indices.push_back({ti[0], ti[k], ti[k + 1]});
            }
        }
        // vn, o, g, s, usemtl, mtllib: ignored
    }
    if (mesh.faces.empty()) throw MalformedInputError("mesh has no faces");
    if (face_without_uv || mesh.uv_coords.empty() || mesh.face_uv_indices.size() != mesh.faces.size())
        throw MissingAtlasError("mesh has no complete UV atlas (every face needs vt indices)");
    if (normalize) normalize_mesh(mesh);
    mesh.validate();
    return mesh;
}

Mesh load_mesh(const fs::path& path, bool normalize) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mesh: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_mesh(ss.str(), normalize);
    } catch (const MalformedInputError& e) {
        throw MalformedInputError(path.string() + ": " + e.what());
    }
}

std::string format_mesh(const Mesh& mesh) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "# texgen mesh\n";
    for (const Vec3& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const Vec2& t : mesh.uv_coords) out << "vt " << t.u << ' ' << t.v << '\n';
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        out << 'f';
        for (int k = 0; k < 3; ++k) {
            out << ' ' << mesh.faces[f][k] + 1;
            if (f < mesh.face_uv_indices.size()) out << '/' << mesh.face_uv_indices[f][k] + 1;
        }
        out << '\n';
    }
    return out.str();
}

void save_mesh(const fs::path& path, const Mesh& mesh) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write mesh: " + path.string());
    out << format_mesh(mesh);
    if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Primitives

namespace {

struct Rect {
    double u0, v0, u1, v1;
    Vec2 map(double s, double t) const { return {u0 + (u1 - u0) * s, v0 + (v1 - v0) * t}; }
};

// Appends a (segments x rings) grid patch. `surface(s, t)` gives the 3D point
// and `chart(s, t)` the uv. Triangles degenerate in 3D are dropped.
void add_grid_patch(Mesh& mesh, int segs, int rings, const std::function<Vec3(double, double)>& surface,
                    const std::function<Vec2(double, double)>& chart) {
    const int base_v = static_cast<int>(mesh.vertices.size());
    const int base_t = static_cast<int>(mesh.uv_coords.size());
    for (int j = 0; j <= rings; ++j) {
        for (int i = 0; i <= segs; ++i) {
            double s = static_cast<double>(i) / segs, t = static_cast<double>(j) / rings;
            mesh.vertices.push_back(surface(s, t));
            mesh.uv_coords.push_back(chart(s, t));
        }
    }
    auto id = [&](int i, int j) { return j * (segs + 1) + i; };
    auto add = [&](int a, int b, int c) {
        const Vec3& pa = mesh.vertices[base_v + a];
        const Vec3& pb = mesh.vertices[base_v + b];
        const Vec3& pc = mesh.vertices[base_v + c];
        if (norm(cross(pb - pa, pc - pa)) < 1e-12) return;
        mesh.faces.push_back({base_v + a, base_v + b, base_v + c});
        mesh.face_uv_indices.push_back({base_t + a, base_t + b, base_t + c});
    };
    for (int j = 0; j < rings; ++j) {
        for (int i = 0; i < segs; ++i) {
            add(id(i, j), id(i + 1, j), id(i + 1, j + 1));
            add(id(i, j), id(i + 1, j + 1), id(i, j + 1));
        }
    }
}

// Flips faces whose normal points towards the interior reference point.
void orient_outward(Mesh& mesh, const std::function<Vec3(const Vec3&)>& inner_reference) {
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        auto& fv = mesh.faces[f];
        const Vec3& a = mesh.vertices[fv[0]];
        const Vec3& b = mesh.vertices[fv[1]];
        const Vec3& c = mesh.vertices[fv[2]];
        Vec3 n = cross(b - a, c - a);
        Vec3 centroid = (a + b + c) / 3.0;
        if (dot(n, centroid - inner_reference(centroid)) < 0) {
            std::swap(fv[1], fv[2]);
            std::swap(mesh.face_uv_indices[f][1], mesh.face_uv_indices[f][2]);
        }
    }
}

Vec3 sphere_point(double theta, double phi, double r) {
    // theta: polar angle from +Y, phi: azimuth.
    return {r * std::sin(theta) * std::cos(phi), r * std::cos(theta), r * std::sin(theta) * std::sin(phi)};
}

}  // namespace

Mesh make_unit_cube() {
    Mesh m;
    m.vertices = {{-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
                  {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1}};
    auto vid = [&](const Vec3& p) {
        for (size_t i = 0; i < m.vertices.size(); ++i)
            if (m.vertices[i] == p) return static_cast<int>(i);
        throw std::logic_error("cube corner");
    };
    struct FaceSpec {
        Vec3 n, a, b;
    };
    const FaceSpec specs[6] = {
        {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}},  {{-1, 0, 0}, {0, 0, 1}, {0, 1, 0}},
        {{0, 1, 0}, {0, 0, 1}, {1, 0, 0}},  {{0, -1, 0}, {1, 0, 0}, {0, 0, 1}},
        {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}},  {{0, 0, -1}, {0, 1, 0}, {1, 0, 0}},
    };
    // 3 x 2 island layout with gutters.
    const double side = 0.3;
    for (int f = 0; f < 6; ++f) {
        int col = f % 3, row = f / 3;
        double u0 = col / 3.0 + (1.0 / 3.0 - side) / 2.0;
        double v0 = row * 0.5 + (0.5 - side) / 2.0;
        const FaceSpec& s = specs[f];
        Vec3 corners[4] = {s.n - s.a - s.b, s.n + s.a - s.b, s.n + s.a + s.b, s.n - s.a + s.b};
        Vec2 uvs[4] = {{u0, v0}, {u0 + side, v0}, {u0 + side, v0 + side}, {u0, v0 + side}};
        int vt = static_cast<int>(m.uv_coords.size());
        for (const Vec2& t : uvs) m.uv_coords.push_back(t);
        int v[4];
        for (int k = 0; k < 4; ++k) v[k] = vid(corners[k]);
        m.faces.push_back({v[0], v[1], v[2]});
        m.face_uv_indices.push_back({vt, vt + 1, vt + 2});
        m.faces.push_back({v[0], v[2], v[3]});
        m.face_uv_indices.push_back({vt, vt + 2, vt + 3});
    }
    return m;
}

Mesh make_uv_sphere(int rings, int segments) {
    Mesh m;
    // Two hemisphere islands stacked in v.
    const Rect north{0.03, 0.03, 0.97, 0.47}, south{0.03, 0.53, 0.97, 0.97};
    int half = std::max(1, rings / 2);
    add_grid_patch(
        m, segments, half, [](double s, double t) { return sphere_point(t * M_PI / 2, s * 2 * M_PI, 1.0); },
        [&](double s, double t) { return north.map(s, t); });
    add_grid_patch(
        m, segments, half,
        [](double s, double t) { return sphere_point(M_PI / 2 + t * M_PI / 2, s * 2 * M_PI, 1.0); },
        [&](double s, double t) { return south.map(s, t); });
    orient_outward(m, [](const Vec3&) { return Vec3{0, 0, 0}; });
    normalize_mesh(m);
    return m;
}

Mesh make_torus(int rings, int segments) {
    Mesh m;
    const double R = 1.0, r = 0.4;
    const Rect chart{0.03, 0.03, 0.97, 0.97};
    add_grid_patch(
        m, rings, segments,
        [&](double s, double t) {
            double a = s * 2 * M_PI, b = t * 2 * M_PI;
            return Vec3{(R + r * std::cos(b)) * std::cos(a), r * std::sin(b), (R + r * std::cos(b)) * std::sin(a)};
        },
        [&](double s, double t) { return chart.map(s, t); });
    orient_outward(m, [&](const Vec3& p) {
        double len = std::hypot(p.x, p.z);
        return len > 0 ? Vec3{p.x / len * R, 0, p.z / len * R} : Vec3{R, 0, 0};
    });
    normalize_mesh(m);
    return m;
}

Mesh make_capsule(int segments) {
    Mesh m;
    const double radius = 0.5, half_len = 0.5;
    const Rect body{0.03, 0.03, 0.97, 0.45};
    add_grid_patch(
        m, segments, 4,
        [&](double s, double t) {
            double a = s * 2 * M_PI;
            return Vec3{radius * std::cos(a), half_len - 2 * half_len * t, radius * std::sin(a)};
        },
        [&](double s, double t) { return body.map(s, t); });
    // Caps: azimuthal-equidistant discs.
    const int cap_rings = 4;
    for (int cap = 0; cap < 2; ++cap) {
        const double sign = cap == 0 ? 1.0 : -1.0;
        const Vec2 centre{cap == 0 ? 0.25 : 0.75, 0.73};
        const double r_uv = 0.22;
        add_grid_patch(
            m, segments, cap_rings,
            [&](double s, double t) {
                double theta = t * M_PI / 2, a = s * 2 * M_PI;
                return Vec3{radius * std::sin(theta) * std::cos(a), sign * (half_len + radius * std::cos(theta)),
                            radius * std::sin(theta) * std::sin(a)};
            },
            [&](double s, double t) {
                double a = s * 2 * M_PI;
                return Vec2{centre.u + r_uv * t * std::cos(a), centre.v + r_uv * t * std::sin(a)};
            });
    }
    orient_outward(m, [&](const Vec3& p) { return Vec3{0, std::clamp(p.y, -half_len, half_len), 0}; });
    normalize_mesh(m);
    return m;
}

Mesh make_toy_shape(const std::string& name) {
    if (name == "cube") return make_unit_cube();
    if (name == "sphere") return make_uv_sphere();
    if (name == "torus") return make_torus();
    if (name == "capsule") return make_capsule();
    throw PreconditionError("unknown toy shape: " + name);
}

// ---------------------------------------------------------------------------
// Procedural textures

namespace {

std::array<double, 3> random_color(Rng& rng) {
    return {rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
}

double smooth(double x) { return x * x * (3 - 2 * x); }

}  // namespace

Grid make_procedural_texture(const Mesh& mesh, const std::string& pattern, int resolution, Rng& rng, int dilation) {
    GeometryMaps geo = rasterize_uv(mesh, resolution);
    Grid tex(resolution, resolution, 3);
    auto a = random_color(rng);
    auto b = random_color(rng);
    // Keep the two colours distinguishable.
    if (std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]) < 0.8) {
        for (int c = 0; c < 3; ++c) b[c] = a[c] > 0 ? a[c] - 0.9 : a[c] + 0.9;
    }
    std::function<double(double, double)> mix;  // 0 -> a, 1 -> b
    if (pattern == "checker") {
        int cells = rng.uniform(0, 1) < 0.5 ? 4 : 8;
        mix = [cells](double u, double v) {
            int k = static_cast<int>(std::floor(u * cells)) + static_cast<int>(std::floor(v * cells));
            return (k & 1) ? 1.0 : 0.0;
        };
    } else if (pattern == "stripes") {
        int n = static_cast<int>(rng.uniform_int(3, 8));
        bool along_u = rng.uniform() < 0.5;
        mix = [n, along_u](double u, double v) {
            double x = along_u ? u : v;
            return (static_cast<int>(std::floor(x * n * 2)) & 1) ? 1.0 : 0.0;
        };
    } else if (pattern == "noise") {
        const int L = 5;
        std::vector<double> lattice(L * L);
        for (double& x : lattice) x = rng.uniform();
        mix = [lattice, L](double u, double v) {
            double x = u * (L - 1), y = v * (L - 1);
            int xi = std::min(static_cast<int>(x), L - 2), yi = std::min(static_cast<int>(y), L - 2);
            double fx = smooth(x - xi), fy = smooth(y - yi);
            double v00 = lattice[yi * L + xi], v10 = lattice[yi * L + xi + 1];
            double v01 = lattice[(yi + 1) * L + xi], v11 = lattice[(yi + 1) * L + xi + 1];
            return (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy;
        };
    } else if (pattern == "decal") {
        double cu = rng.uniform(0.25, 0.75), cv = rng.uniform(0.25, 0.75), rad = rng.uniform(0.12, 0.2);
        mix = [cu, cv, rad](double u, double v) { return std::hypot(u - cu, v - cv) < rad ? 1.0 : 0.0; };
    } else {
        throw PreconditionError("unknown texture pattern: " + pattern);
    }
    for (int r = 0; r < resolution; ++r) {
        for (int c = 0; c < resolution; ++c) {
            size_t idx = static_cast<size_t>(r) * resolution + c;
            if (!geo.covered(idx)) continue;
            double m = mix((c + 0.5) / resolution, (r + 0.5) / resolution);
            for (int ch = 0; ch < 3; ++ch) tex.data[idx * 3 + ch] = a[ch] * (1 - m) + b[ch] * m;
        }
    }
    dilate_texture(tex, geo.mask_map, dilation);
    return tex;
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<DatasetSample> DatasetManifest::by_split(Split s) const {
    std::vector<DatasetSample> out;
    for (const auto& x : samples)
        if (x.split == s) out.push_back(x);
    return out;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    const fs::path base = path.parent_path();
    for (const auto& s : manifest.samples) {
        nlohmann::ordered_json j;
        j["id"] = s.id;
        j["mesh"] = s.mesh_path.is_absolute() ? fs::relative(s.mesh_path, base).generic_string() : s.mesh_path.generic_string();
        j["texture"] = s.texture_path.is_absolute() ? fs::relative(s.texture_path, base).generic_string()
                                                    : s.texture_path.generic_string();
        j["caption"] = s.caption;
        j["split"] = s.split == Split::train ? "train" : "eval";
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    const fs::path base = path.parent_path();
    DatasetManifest m;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        DatasetSample s;
        try {
            auto j = nlohmann::json::parse(line);
            s.id = j.at("id").get<std::string>();
            s.mesh_path = base / j.at("mesh").get<std::string>();
            s.texture_path = base / j.at("texture").get<std::string>();
            s.caption = j.value("caption", "");
            std::string split = j.value("split", "train");
            if (split == "train") {
                s.split = Split::train;
            } else if (split == "eval") {
                s.split = Split::eval;
            } else {
                throw ValidationError("manifest line " + std::to_string(line_no) + ": unknown split '" + split + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        m.samples.push_back(std::move(s));
    }
    if (m.samples.empty()) throw ValidationError("no samples");

    std::set<std::string> ids;
    std::vector<std::string> problems;
    for (const auto& s : m.samples) {
        if (!ids.insert(s.id).second) problems.push_back(s.id + ": duplicate id");
        if (!fs::exists(s.mesh_path)) {
            problems.push_back(s.id + ": missing mesh " + s.mesh_path.string());
        } else {
            try {
                load_mesh(s.mesh_path);
            } catch (const Error& e) {
                problems.push_back(s.id + ": " + e.what());
            }
        }
        if (!fs::exists(s.texture_path)) {
            problems.push_back(s.id + ": missing texture " + s.texture_path.string());
        } else {
            try {
                Grid t = read_ppm(s.texture_path);
                if (t.width != t.height || !is_power_of_two(t.width))
                    problems.push_back(s.id + ": texture is not square power-of-two");
            } catch (const Error& e) {
                problems.push_back(s.id + ": " + e.what());
            }
        }
    }
    if (!problems.empty()) {
        std::string msg = "manifest validation failed:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }
    return m;
}

DatasetManifest make_toy_dataset(uint64_t seed, int count, const fs::path& out_dir, int resolution) {
    require(count >= 1, "make_toy_dataset: count must be >= 1");
    require(resolution == 64 || resolution == 128 || resolution == 256,
            "make_toy_dataset: resolution must be one of 64, 128, 256");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory: " + out_dir.string());

    const int n_eval = count >= 2 ? std::max(1, count / 4) : 0;
    DatasetManifest manifest;
    for (int i = 0; i < count; ++i) {
        Rng rng = Rng::derive(seed, {0x746f79ULL, static_cast<uint64_t>(i)});
        const std::string shape = toy_shapes()[i % toy_shapes().size()];
        const std::string pattern = toy_patterns()[rng.uniform_int(0, static_cast<int64_t>(toy_patterns().size()) - 1)];
        std::ostringstream id;
        id << "toy_" << std::setw(4) << std::setfill('0') << i;
        Mesh mesh = make_toy_shape(shape);
        Grid tex = make_procedural_texture(mesh, pattern, resolution, rng);

        DatasetSample s;
        s.id = id.str();
        s.mesh_path = out_dir / (s.id + ".obj");
        s.texture_path = out_dir / (s.id + ".ppm");
        s.caption = "a " + pattern + " " + shape;
        s.split = i >= count - n_eval ? Split::eval : Split::train;
        save_mesh(s.mesh_path, mesh);
        write_ppm(s.texture_path, tex);
        manifest.samples.push_back(s);
    }
    // on disk the entries are relative to the manifest, so the directory can move
    DatasetManifest stored = manifest;
    for (DatasetSample& s : stored.samples) {
        s.mesh_path = s.mesh_path.filename();
        s.texture_path = s.texture_path.filename();
    }
    save_manifest(out_dir / kManifestName, stored);
    return manifest;
}

}  // namespace texgen

#include "texgen/uvgeom.hpp"

#include <algorithm>
#include <limits>
#include <nlohmann/json.hpp>

namespace texgen {

size_t GeometryMaps::coverage() const {
    size_t n = 0;
    for (double m : mask_map.data) n += m > 0.5 ? 1 : 0;
    return n;
}

namespace {

double edge(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

struct UvTriangle {
    std::array<Vec2, 3> uv;
    std::array<Vec3, 3> pos;
};

UvTriangle uv_triangle(const Mesh& mesh, size_t f) {
    UvTriangle t;
    for (int k = 0; k < 3; ++k) {
        t.uv[k] = mesh.uv_coords[mesh.face_uv_indices[f][k]];
        t.pos[k] = mesh.vertices[mesh.faces[f][k]];
    }
    return t;
}

// Barycentrics of point p in the uv triangle; false if degenerate.
bool uv_barycentric(const UvTriangle& t, double u, double v, std::array<double, 3>& b) {
    double area = edge(t.uv[0].u, t.uv[0].v, t.uv[1].u, t.uv[1].v, t.uv[2].u, t.uv[2].v);
    if (std::abs(area) < 1e-14) return false;
    b[0] = edge(t.uv[1].u, t.uv[1].v, t.uv[2].u, t.uv[2].v, u, v) / area;
    b[1] = edge(t.uv[2].u, t.uv[2].v, t.uv[0].u, t.uv[0].v, u, v) / area;
    b[2] = 1.0 - b[0] - b[1];
    return true;
}

constexpr double kInsideEps = 1e-12;

}  // namespace

GeometryMaps rasterize_uv(const Mesh& mesh, int resolution) {
    require(is_power_of_two(resolution), "rasterize_uv: resolution must be a power of two");
    GeometryMaps g;
    g.resolution = resolution;
    g.position_map = Grid(resolution, resolution, 3);
    g.mask_map = Grid(resolution, resolution, 1);
    g.face_index.assign(static_cast<size_t>(resolution) * resolution, -1);
    if (!mesh.has_atlas()) return g;

    const double R = resolution;
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        UvTriangle t = uv_triangle(mesh, f);
        std::array<double, 3> b{};
        if (!uv_barycentric(t, 0.5, 0.5, b)) {
            ++g.degenerate_triangles;
            continue;
        }
        double umin = std::min({t.uv[0].u, t.uv[1].u, t.uv[2].u});
        double umax = std::max({t.uv[0].u, t.uv[1].u, t.uv[2].u});
        double vmin = std::min({t.uv[0].v, t.uv[1].v, t.uv[2].v});
        double vmax = std::max({t.uv[0].v, t.uv[1].v, t.uv[2].v});
        int c0 = std::max(0, static_cast<int>(std::floor(umin * R - 0.5)));
        int c1 = std::min(resolution - 1, static_cast<int>(std::ceil(umax * R - 0.5)));
        int r0 = std::max(0, static_cast<int>(std::floor(vmin * R - 0.5)));
        int r1 = std::min(resolution - 1, static_cast<int>(std::ceil(vmax * R - 0.5)));
        for (int r = r0; r <= r1; ++r) {
            double v = (r + 0.5) / R;
            for (int c = c0; c <= c1; ++c) {
                size_t idx = static_cast<size_t>(r) * resolution + c;
                if (g.face_index[idx] >= 0) continue;
                double u = (c + 0.5) / R;
                uv_barycentric(t, u, v, b);
                if (b[0] < -kInsideEps || b[1] < -kInsideEps || b[2] < -kInsideEps) continue;
                Vec3 p = t.pos[0] * b[0] + t.pos[1] * b[1] + t.pos[2] * b[2];
                g.face_index[idx] = static_cast<int>(f);
                g.mask_map.data[idx] = 1.0;
                g.position_map.data[idx * 3 + 0] = p.x;
                g.position_map.data[idx * 3 + 1] = p.y;
                g.position_map.data[idx * 3 + 2] = p.z;
            }
        }
    }
    return g;
}

std::vector<GeometryMaps> geometry_pyramid(const Mesh& mesh, int resolution, int levels) {
    require(levels >= 1, "geometry_pyramid: levels must be >= 1");
    require(resolution >> (levels - 1) >= 1, "geometry_pyramid: too many levels for resolution");
    std::vector<GeometryMaps> out;
    out.push_back(rasterize_uv(mesh, resolution));
    for (int l = 1; l < levels; ++l) {
        const GeometryMaps& fine = out.back();
        GeometryMaps coarse = rasterize_uv(mesh, fine.resolution / 2);
        const int R = coarse.resolution;
        for (int r = 0; r < R; ++r) {
            for (int c = 0; c < R; ++c) {
                size_t idx = static_cast<size_t>(r) * R + c;
                Vec3 sum;
                int n = 0;
                int child_face = -1;
                for (int dr = 0; dr < 2; ++dr) {
                    for (int dc = 0; dc < 2; ++dc) {
                        size_t fi = static_cast<size_t>(2 * r + dr) * fine.resolution + (2 * c + dc);
                        if (!fine.covered(fi)) continue;
                        sum += Vec3{fine.position_map.data[fi * 3], fine.position_map.data[fi * 3 + 1],
                                    fine.position_map.data[fi * 3 + 2]};
                        if (child_face < 0) child_face = fine.face_index[fi];
                        ++n;
                    }
                }
                if (coarse.covered(idx) || n == 0) continue;
                Vec3 p = sum / n;
                coarse.mask_map.data[idx] = 1.0;
                coarse.face_index[idx] = child_face;
                coarse.position_map.data[idx * 3] = p.x;
                coarse.position_map.data[idx * 3 + 1] = p.y;
                coarse.position_map.data[idx * 3 + 2] = p.z;
            }
        }
        out.push_back(std::move(coarse));
    }
    return out;
}

void Camera::validate() const {
    require(!(eye == target), "camera: eye must differ from target");
    require(vertical_fov > 0.0 && vertical_fov < 180.0, "camera: fov must be in (0, 180)");
    require(image_size >= 1, "camera: image_size must be positive");
    require(norm(cross(forward(), up)) > 1e-9, "camera: up must not be parallel to the view direction");
}

std::string camera_to_json(const Camera& cam) {
    nlohmann::ordered_json j;
    j["eye"] = {cam.eye.x, cam.eye.y, cam.eye.z};
    j["target"] = {cam.target.x, cam.target.y, cam.target.z};
    j["up"] = {cam.up.x, cam.up.y, cam.up.z};
    j["fov"] = cam.vertical_fov;
    j["image_size"] = cam.image_size;
    return j.dump();
}

Camera camera_from_json(const std::string& text) {
    try {
        auto j = nlohmann::json::parse(text);
        auto v3 = [](const nlohmann::json& a) { return Vec3{a.at(0), a.at(1), a.at(2)}; };
        Camera c;
        c.eye = v3(j.at("eye"));
        c.target = v3(j.at("target"));
        if (j.contains("up")) c.up = v3(j.at("up"));
        c.vertical_fov = j.value("fov", 40.0);
        c.image_size = j.value("image_size", 128);
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedInputError(std::string("camera: ") + e.what());
    }
}

Camera orbit_camera(double azimuth_deg, double elevation_deg, double distance, double fov_deg, int image_size) {
    const double az = azimuth_deg * M_PI / 180.0;
    const double el = elevation_deg * M_PI / 180.0;
    Camera c;
    c.eye = Vec3{std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el)} * distance;
    c.target = Vec3{0, 0, 0};
    c.up = Vec3{0, 1, 0};
    if (std::abs(std::cos(el)) < 1e-6) c.up = Vec3{0, 0, -1};
    c.vertical_fov = fov_deg;
    c.image_size = image_size;
    return c;
}

namespace {

struct CameraFrame {
    Vec3 eye, right, up, fwd;
    double focal = 1.0;
    double half = 0.0;

    explicit CameraFrame(const Camera& c) {
        c.validate();
        eye = c.eye;
        fwd = c.forward();
        right = normalized(cross(fwd, c.up));
        up = cross(right, fwd);
        half = c.image_size * 0.5;
        focal = half / std::tan(c.vertical_fov * M_PI / 360.0);
    }

    // Camera-space coordinates (x right, y up, z forward).
    Vec3 to_camera(const Vec3& p) const {
        Vec3 d = p - eye;
        return {dot(d, right), dot(d, up), dot(d, fwd)};
    }

    // Pixel-plane position (col, row) in continuous coordinates.
    void project(const Vec3& cam, double& px, double& py) const {
        px = half + focal * cam.x / cam.z;
        py = half - focal * cam.y / cam.z;
    }

    // Ray direction through pixel-plane point with unit forward component.
    Vec3 ray(double px, double py) const {
        double x = (px - half) / focal;
        double y = -(py - half) / focal;
        return right * x + up * y + fwd;
    }
};

constexpr double kNear = 1e-4;

}  // namespace

ViewRaster rasterize_view(const Mesh& mesh, const Camera& camera) {
    CameraFrame frame(camera);
    const int S = camera.image_size;
    ViewRaster out;
    out.size = S;
    out.uv_buffer = Grid(S, S, 2);
    out.valid = Grid(S, S, 1);
    out.depth = Grid(S, S, 1);
    out.face_id.assign(static_cast<size_t>(S) * S, -1);
    std::vector<double> zbuf(static_cast<size_t>(S) * S, std::numeric_limits<double>::infinity());
    const bool has_uv = mesh.has_atlas();

    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        std::array<Vec3, 3> cam;
        std::array<double, 3> px{}, py{};
        bool behind = false;
        for (int k = 0; k < 3; ++k) {
            cam[k] = frame.to_camera(mesh.vertices[mesh.faces[f][k]]);
            if (cam[k].z <= kNear) behind = true;
            frame.project(cam[k], px[k], py[k]);
        }
        if (behind) continue;
        double area = edge(px[0], py[0], px[1], py[1], px[2], py[2]);
        if (std::abs(area) < 1e-14) continue;
        int x0 = std::max(0, static_cast<int>(std::floor(std::min({px[0], px[1], px[2]}) - 0.5)));
        int x1 = std::min(S - 1, static_cast<int>(std::ceil(std::max({px[0], px[1], px[2]}) - 0.5)));
        int y0 = std::max(0, static_cast<int>(std::floor(std::min({py[0], py[1], py[2]}) - 0.5)));
        int y1 = std::min(S - 1, static_cast<int>(std::ceil(std::max({py[0], py[1], py[2]}) - 0.5)));
        for (int y = y0; y <= y1; ++y) {
            double sy = y + 0.5;
            for (int x = x0; x <= x1; ++x) {
                double sx = x + 0.5;
                double b0 = edge(px[1], py[1], px[2], py[2], sx, sy) / area;
                double b1 = edge(px[2], py[2], px[0], py[0], sx, sy) / area;
                double b2 = 1.0 - b0 - b1;
                if (b0 < -kInsideEps || b1 < -kInsideEps || b2 < -kInsideEps) continue;
                double w0 = b0 / cam[0].z, w1 = b1 / cam[1].z, w2 = b2 / cam[2].z;
                double wsum = w0 + w1 + w2;
                double z = 1.0 / wsum;
                size_t idx = static_cast<size_t>(y) * S + x;
                if (!(z < zbuf[idx])) continue;
                zbuf[idx] = z;
                out.face_id[idx] = static_cast<int>(f);
                out.valid.data[idx] = 1.0;
                out.depth.data[idx] = z;
                if (has_uv) {
                    const auto& fi = mesh.face_uv_indices[f];
                    const Vec2& a = mesh.uv_coords[fi[0]];
                    const Vec2& b = mesh.uv_coords[fi[1]];
                    const Vec2& c = mesh.uv_coords[fi[2]];
                    out.uv_buffer.data[idx * 2] = (w0 * a.u + w1 * b.u + w2 * c.u) / wsum;
                    out.uv_buffer.data[idx * 2 + 1] = (w0 * a.v + w1 * b.v + w2 * c.v) / wsum;
                }
            }
        }
    }
    return out;
}

std::array<std::pair<int, double>, 4> bilinear_taps(double u, double v, int width, int height) {
    double x = u * width - 0.5;
    double y = v * height - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height - 1));
    int xi = std::min(static_cast<int>(std::floor(x)), width - 1);
    int yi = std::min(static_cast<int>(std::floor(y)), height - 1);
    int xj = std::min(xi + 1, width - 1);
    int yj = std::min(yi + 1, height - 1);
    double fx = x - xi;
    double fy = y - yi;
    return {{{yi * width + xi, (1 - fx) * (1 - fy)},
             {yi * width + xj, fx * (1 - fy)},
             {yj * width + xi, (1 - fx) * fy},
             {yj * width + xj, fx * fy}}};
}

void bilinear_sample(const Grid& texture, double u, double v, double* out) {
    // Nested lerps rather than a weighted sum: exact on constant regions.
    const int W = texture.width, H = texture.height, C = texture.channels;
    double x = std::clamp(u * W - 0.5, 0.0, static_cast<double>(W - 1));
    double y = std::clamp(v * H - 0.5, 0.0, static_cast<double>(H - 1));
    int xi = std::min(static_cast<int>(std::floor(x)), W - 1);
    int yi = std::min(static_cast<int>(std::floor(y)), H - 1);
    int xj = std::min(xi + 1, W - 1);
    int yj = std::min(yi + 1, H - 1);
    double fx = x - xi, fy = y - yi;
    auto px = [&](int r, int c, int ch) { return texture.data[(static_cast<size_t>(r) * W + c) * C + ch]; };
    for (int ch = 0; ch < C; ++ch) {
        double top = px(yi, xi, ch) + fx * (px(yi, xj, ch) - px(yi, xi, ch));
        double bot = px(yj, xi, ch) + fx * (px(yj, xj, ch) - px(yj, xi, ch));
        out[ch] = top + fy * (bot - top);
    }
}

Grid shade(const ViewRaster& raster, const Grid& texture) {
    const int S = raster.size;
    Grid img(S, S, texture.channels, kBackground);
    for (size_t i = 0; i < raster.valid.data.size(); ++i) {
        if (raster.valid.data[i] < 0.5) continue;
        bilinear_sample(texture, raster.uv_buffer.data[i * 2], raster.uv_buffer.data[i * 2 + 1],
                        &img.data[i * texture.channels]);
    }
    return img;
}

RenderResult render_view(const Mesh& mesh, const Grid& texture, const Camera& camera) {
    require(texture.channels == 3 && texture.height == texture.width, "render_view: texture must be square RGB");
    ViewRaster raster = rasterize_view(mesh, camera);
    RenderResult r;
    r.image = shade(raster, texture);
    r.uv_buffer = std::move(raster.uv_buffer);
    r.valid = std::move(raster.valid);
    return r;
}

Grid render_depth(const Mesh& mesh, const Camera& camera) {
    ViewRaster raster = rasterize_view(mesh, camera);
    Vec3 center = (mesh.bbox_min() + mesh.bbox_max()) * 0.5;
    double radius = mesh.bounding_radius();
    double dist = dot(center - camera.eye, camera.forward());
    double near = dist - radius;
    double span = std::max(2.0 * radius, 1e-9);
    Grid out(raster.size, raster.size, 1, 1.0);
    for (size_t i = 0; i < out.data.size(); ++i) {
        if (raster.valid.data[i] < 0.5) continue;
        out.data[i] = std::clamp((raster.depth.data[i] - near) / span, 0.0, 1.0);
    }
    return out;
}

ProjectionResult project_view_to_texture(const Mesh& mesh, const Grid& image, const Camera& camera, int resolution,
                                         const ProjectionOptions& opts) {
    return project_view_to_texture(mesh, rasterize_uv(mesh, resolution), image, camera, opts);
}

ProjectionResult project_view_to_texture(const Mesh& mesh, const GeometryMaps& geometry, const Grid& image,
                                         const Camera& camera, const ProjectionOptions& opts) {
    require(image.height == camera.image_size && image.width == camera.image_size && image.channels == 3,
            "project_view_to_texture: image does not match camera.image_size");
    CameraFrame frame(camera);
    ViewRaster raster = rasterize_view(mesh, camera);
    const int R = geometry.resolution;
    const int S = camera.image_size;
    const double tol = opts.depth_tolerance * mesh.bounding_radius();

    ProjectionResult out;
    out.partial_texture = Grid(R, R, 3);
    out.visibility_mask = Grid(R, R, 1);
    out.view_cosine = Grid(R, R, 1);

    std::vector<Vec3> normals(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& fv = mesh.faces[f];
        normals[f] = normalized(cross(mesh.vertices[fv[1]] - mesh.vertices[fv[0]], mesh.vertices[fv[2]] - mesh.vertices[fv[0]]));
    }

    for (size_t t = 0; t < geometry.mask_map.data.size(); ++t) {
        if (!geometry.covered(t)) continue;
        Vec3 p{geometry.position_map.data[t * 3], geometry.position_map.data[t * 3 + 1],
               geometry.position_map.data[t * 3 + 2]};
        const int own_face = geometry.face_index[t];
        if (own_face < 0) continue;
        Vec3 to_eye = camera.eye - p;
        double cosv = dot(normals[own_face], normalized(to_eye));
        if (cosv <= 0.0) continue;
        Vec3 cam = frame.to_camera(p);
        if (cam.z <= kNear) continue;
        double px = 0, py = 0;
        frame.project(cam, px, py);
        if (px < 0 || py < 0 || px >= S || py >= S) continue;
        int ix = static_cast<int>(px), iy = static_cast<int>(py);
        int hit = raster.face_id[static_cast<size_t>(iy) * S + ix];
        if (hit < 0) continue;
        // Depth of the visible surface: either the stored pixel-centre depth or
        // the plane of the winning face evaluated along this texel's ray.
        double surface_z = raster.depth.data[static_cast<size_t>(iy) * S + ix];
        if (opts.depth_source == DepthSource::face_plane) {
            Vec3 dir = frame.ray(px, py);
            const Vec3& n = normals[hit];
            double denom = dot(n, dir);
            if (std::abs(denom) < 1e-12) continue;
            surface_z = dot(n, mesh.vertices[mesh.faces[hit][0]] - camera.eye) / denom;
        }
        if (std::abs(cam.z - surface_z) > tol) continue;

        // Bilinear image lookup restricted to covered pixels.
        double x = std::clamp(px - 0.5, 0.0, static_cast<double>(S - 1));
        double y = std::clamp(py - 0.5, 0.0, static_cast<double>(S - 1));
        int x0 = std::min(static_cast<int>(x), S - 1), y0 = std::min(static_cast<int>(y), S - 1);
        int x1 = std::min(x0 + 1, S - 1), y1 = std::min(y0 + 1, S - 1);
        double fx = x - x0, fy = y - y0;
        std::array<std::pair<size_t, double>, 4> taps{{{static_cast<size_t>(y0) * S + x0, (1 - fx) * (1 - fy)},
                                                       {static_cast<size_t>(y0) * S + x1, fx * (1 - fy)},
                                                       {static_cast<size_t>(y1) * S + x0, (1 - fx) * fy},
                                                       {static_cast<size_t>(y1) * S + x1, fx * fy}}};
        double color[3] = {0, 0, 0};
        double wsum = 0;
        for (const auto& [pi, w] : taps) {
            if (w <= 0.0 || raster.valid.data[pi] < 0.5) continue;
            for (int c = 0; c < 3; ++c) color[c] += w * image.data[pi * 3 + c];
            wsum += w;
        }
        if (wsum <= 0.0) {
            size_t pi = static_cast<size_t>(iy) * S + ix;
            for (int c = 0; c < 3; ++c) color[c] = image.data[pi * 3 + c];
            wsum = 1.0;
        }
        for (int c = 0; c < 3; ++c) out.partial_texture.data[t * 3 + c] = color[c] / wsum;
        out.visibility_mask.data[t] = 1.0;
        out.view_cosine.data[t] = cosv;
    }
    return out;
}

std::vector<Grid> grazing_weights(const std::vector<ProjectionResult>& results) {
    std::vector<Grid> w;
    w.reserve(results.size());
    for (const auto& r : results) {
        Grid g = r.view_cosine;
        for (double& v : g.data) v = std::max(v, 0.0);
        w.push_back(std::move(g));
    }
    return w;
}

ProjectionResult fuse_projections(const std::vector<ProjectionResult>& results) {
    return fuse_projections(results, grazing_weights(results));
}

ProjectionResult fuse_projections(const std::vector<ProjectionResult>& results, const std::vector<Grid>& weights) {
    require(!results.empty(), "fuse_projections: empty input");
    require(weights.size() == results.size(), "fuse_projections: one weight map per view required");
    const Grid& ref = results.front().partial_texture;
    for (size_t i = 0; i < results.size(); ++i) {
        require(results[i].partial_texture.same_shape(ref) &&
                    results[i].visibility_mask.texels() == ref.texels() && weights[i].texels() == ref.texels(),
                "fuse_projections: resolution mismatch");
    }
    const int R = ref.height;
    ProjectionResult out;
    out.partial_texture = Grid(R, ref.width, 3);
    out.visibility_mask = Grid(R, ref.width, 1);
    out.view_cosine = Grid(R, ref.width, 1);

    struct Obs {
        double w, cosv, r, g, b;
        auto key() const { return std::tie(w, cosv, r, g, b); }
    };
    std::vector<Obs> obs;
    for (size_t t = 0; t < ref.texels(); ++t) {
        obs.clear();
        for (size_t i = 0; i < results.size(); ++i) {
            if (results[i].visibility_mask.data[t] < 0.5) continue;
            const double* c = &results[i].partial_texture.data[t * 3];
            obs.push_back({weights[i].data[t], results[i].view_cosine.data[t], c[0], c[1], c[2]});
        }
        if (obs.empty()) continue;
        // Canonical order makes the floating-point sum order-independent.
        std::sort(obs.begin(), obs.end(), [](const Obs& a, const Obs& b) { return a.key() < b.key(); });
        bool has_good = std::any_of(obs.begin(), obs.end(), [](const Obs& o) { return o.w >= kGrazingCutoff; });
        if (has_good) {
            std::erase_if(obs, [](const Obs& o) { return o.w < kGrazingCutoff; });
        }
        out.visibility_mask.data[t] = 1.0;
        double* dst = &out.partial_texture.data[t * 3];
        if (obs.size() == 1) {
            dst[0] = obs[0].r;
            dst[1] = obs[0].g;
            dst[2] = obs[0].b;
            out.view_cosine.data[t] = obs[0].cosv;
            continue;
        }
        double wsum = 0, r = 0, g = 0, b = 0, cmax = 0;
        for (const Obs& o : obs) {
            wsum += o.w;
            r += o.w * o.r;
            g += o.w * o.g;
            b += o.w * o.b;
            cmax = std::max(cmax, o.cosv);
        }
        if (wsum <= 0.0) {
            // All weights zero: plain average.
            wsum = 0;
            r = g = b = 0;
            for (const Obs& o : obs) {
                r += o.r;
                g += o.g;
                b += o.b;
                wsum += 1.0;
            }
        }
        dst[0] = r / wsum;
        dst[1] = g / wsum;
        dst[2] = b / wsum;
        out.view_cosine.data[t] = cmax;
    }
    return out;
}

void dilate_texture(Grid& texture, const Grid& mask, int texels) {
    const int H = texture.height, W = texture.width, C = texture.channels;
    std::vector<char> filled(texture.texels());
    for (size_t i = 0; i < filled.size(); ++i) filled[i] = mask.data[i] > 0.5;
    for (int step = 0; step < texels; ++step) {
        std::vector<char> next = filled;
        Grid src = texture;
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                size_t idx = static_cast<size_t>(r) * W + c;
                if (filled[idx]) continue;
                double acc[4] = {0, 0, 0, 0};
                int n = 0;
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        int rr = r + dr, cc = c + dc;
                        if (rr < 0 || cc < 0 || rr >= H || cc >= W) continue;
                        size_t j = static_cast<size_t>(rr) * W + cc;
                        if (!filled[j]) continue;
                        for (int ch = 0; ch < C && ch < 4; ++ch) acc[ch] += src.data[j * C + ch];
                        ++n;
                    }
                }
                if (n == 0) continue;
                for (int ch = 0; ch < C && ch < 4; ++ch) texture.data[idx * C + ch] = acc[ch] / n;
                next[idx] = 1;
            }
        }
        filled.swap(next);
    }
}

}  // namespace texgen

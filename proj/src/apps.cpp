#include "texgen/apps.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace texgen::apps {

using diffusion::Scheduler;

namespace {

constexpr uint64_t kReimposeStream = 0x7265696dULL;
constexpr uint64_t kViewPickStream = 0x7669657770ULL;

void check_map(const Grid& g, int R, int channels, const char* what) {
    if (g.height != R || g.width != R || g.channels != channels)
        throw PreconditionError(std::string(what) + " must be " + std::to_string(R) + "x" + std::to_string(R) + "x" +
                                std::to_string(channels));
}

}  // namespace

Grid generate(const Pipeline& p, const net::SampleGeometry& geo, const Grid& partial, const Grid& known,
              const std::optional<std::vector<double>>& image_emb,
              const std::optional<std::vector<double>>& text_emb, const BlendOptions& blend) {
    const int R = geo.resolution;
    check_map(partial, R, 3, "partial texture");
    check_map(known, R, 1, "known mask");
    const std::vector<double>& atlas = geo.levels[0].mask_map.data;
    const size_t N = atlas.size();

    // x_I only carries values where the mask says they are known
    diffusion::Conditioning cond;
    cond.partial.assign(N * 3, 0.0);
    cond.visibility.assign(N, 0.0);
    for (size_t i = 0; i < N; ++i) {
        if (known.data[i] <= 0.5 || atlas[i] <= 0.5) continue;
        cond.visibility[i] = 1.0;
        for (int c = 0; c < 3; ++c) cond.partial[i * 3 + c] = partial.data[i * 3 + c];
    }
    cond.image_emb = image_emb;
    cond.text_emb = text_emb;

    diffusion::StepHook hook;
    std::vector<double> fixed_eps;
    if (blend.reimpose_each_step) {
        Rng rng = Rng::derive(p.sampler.seed, {kReimposeStream});
        fixed_eps.resize(N * 3);
        for (double& e : fixed_eps) e = rng.normal();
        hook = [&](std::vector<double>& x, int t_next, int) {
            const double a = p.scheduler.sqrt_ab(t_next), b = p.scheduler.sqrt_1mab(t_next);
            for (size_t i = 0; i < N; ++i) {
                if (cond.visibility[i] <= 0.5) continue;
                for (int c = 0; c < 3; ++c) x[i * 3 + c] = a * cond.partial[i * 3 + c] + b * fixed_eps[i * 3 + c];
            }
        };
    }

    std::vector<double> x0 = diffusion::sample_texture(p.scheduler, p.net, geo, cond, p.sampler, hook);
    Grid out(R, R, 3);
    for (size_t i = 0; i < N; ++i) {
        if (atlas[i] <= 0.5) continue;
        const bool keep = blend.preserve_known && cond.visibility[i] > 0.5;
        for (int c = 0; c < 3; ++c)
            out.data[i * 3 + c] = keep ? cond.partial[i * 3 + c] : std::clamp(x0[i * 3 + c], -1.0, 1.0);
    }
    return out;
}

Grid inpaint(const InpaintRequest& req, const Pipeline& p) {
    const int R = req.partial_texture.height;
    require(R > 0 && is_power_of_two(R), "inpaint: texture resolution must be a power of two");
    check_map(req.partial_texture, R, 3, "inpaint: partial texture");
    check_map(req.known_mask, R, 1, "inpaint: known mask");
    auto geo = net::SampleGeometry::build(req.mesh, R, p.net.config());
    const std::vector<double>& atlas = geo->levels[0].mask_map.data;
    for (size_t i = 0; i < atlas.size(); ++i)
        if (req.known_mask.data[i] > 0.5 && atlas[i] <= 0.5)
            throw PreconditionError("inpaint: known mask covers texel " + std::to_string(i) + " outside the atlas");
    std::optional<std::vector<double>> text;
    if (req.prompt) text = p.text_embedder.embed(*req.prompt);
    // no reference image: the image slot takes the learned null embedding
    return generate(p, *geo, req.partial_texture, req.known_mask, std::nullopt, text, req.blend);
}

int select_embedding_view(uint64_t seed, size_t view_count) {
    require(view_count > 0, "select_embedding_view: no views");
    Rng rng = Rng::derive(seed, {kViewPickStream});
    return static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(view_count) - 1));
}

CompletionResult complete_sparse_views(const Mesh& mesh, const std::vector<PosedImage>& views,
                                       const std::optional<std::string>& prompt, const Pipeline& p, int resolution,
                                       const BlendOptions& blend) {
    if (views.empty()) throw PreconditionError("complete_sparse_views: at least one view is required");
    auto geo = net::SampleGeometry::build(mesh, resolution, p.net.config());
    std::vector<ProjectionResult> projections;
    projections.reserve(views.size());
    for (const PosedImage& v : views) projections.push_back(project_view_to_texture(mesh, geo->levels[0], v.image, v.camera));
    ProjectionResult fused = fuse_projections(projections);

    CompletionResult r;
    r.embedding_view = select_embedding_view(p.sampler.seed, views.size());
    std::optional<std::vector<double>> text;
    if (prompt) text = p.text_embedder.embed(*prompt);
    r.partial = fused.partial_texture;
    r.known = fused.visibility_mask;
    r.texture = generate(p, *geo, r.partial, r.known, p.image_embedder.embed(views[r.embedding_view].image), text,
                         blend);
    return r;
}

Grid StubImageGenerator::generate(const Grid& depth, const std::string& prompt, const Camera& camera) const {
    if (depth.height != camera.image_size || depth.width != camera.image_size)
        throw PreconditionError("stub generator: depth size does not match the camera");
    if (mesh_) return render_view(*mesh_, texture_, camera).image;
    const uint64_t h = fnv1a(prompt);
    double a[3], b[3];
    for (int c = 0; c < 3; ++c) {
        a[c] = static_cast<double>((h >> (8 * c)) & 0xff) / 127.5 - 1.0;
        b[c] = static_cast<double>((h >> (8 * c + 24)) & 0xff) / 127.5 - 1.0;
    }
    const int cell = std::max(1, camera.image_size / 8);
    Grid out(depth.height, depth.width, 3, kBackground);
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            if (depth.at(y, x, 0) >= 1.0) continue;
            const double* col = ((x / cell + y / cell) % 2 == 0) ? a : b;
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = col[c];
        }
    return out;
}

Camera ViewpointPolicy::camera(const Mesh& mesh) const {
    require(distance_scale > 1.0, "viewpoint: camera would sit inside the bounding sphere");
    Camera cam = orbit_camera(azimuth, elevation, distance_scale * mesh.bounding_radius(), fov, image_size);
    const Vec3 centre = (mesh.bbox_min() + mesh.bbox_max()) * 0.5;
    cam.eye = cam.eye + centre;
    cam.target = centre;
    cam.validate();
    return cam;
}

TextToTextureResult text_to_texture(const Mesh& mesh, const std::string& prompt,
                                    const ImageGeneratorAdapter& generator, const ViewpointPolicy& policy,
                                    const Pipeline& p, int resolution, const BlendOptions& blend) {
    TextToTextureResult r;
    r.camera = policy.camera(mesh);
    r.depth = render_depth(mesh, r.camera);
    auto where = [&] {
        std::ostringstream s;
        s << "azimuth " << policy.azimuth << ", elevation " << policy.elevation << ", size " << policy.image_size;
        return s.str();
    };
    try {
        r.generated = generator.generate(r.depth, prompt, r.camera);
    } catch (const std::exception& e) {
        throw Error("image generator failed for view (" + where() + "): " + e.what());
    }
    if (r.generated.height != policy.image_size || r.generated.width != policy.image_size ||
        r.generated.channels != 3)
        throw Error("image generator returned a wrongly sized image for view (" + where() + ")");
    r.completion = complete_sparse_views(mesh, {PosedImage{r.camera, r.generated}}, prompt, p, resolution, blend);
    return r;
}

}  // namespace texgen::apps

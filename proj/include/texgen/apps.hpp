#pragma once

#include <optional>
#include <string>
#include <vector>

#include "texgen/diffusion.hpp"
#include "texgen/mesh_io.hpp"
#include "texgen/net.hpp"
#include "texgen/uvgeom.hpp"

namespace texgen::apps {

/// Everything a pipeline needs besides its inputs. References must outlive
/// the call.
struct Pipeline {
    const net::TexGenNet& net;
    const diffusion::Scheduler& scheduler;
    const net::ImageEmbedder& image_embedder;
    const net::TextEmbedder& text_embedder;
    diffusion::SamplerConfig sampler;
};

struct BlendOptions {
    /// Copy known texels from the partial texture after sampling.
    bool preserve_known = true;
    /// Re-noise known texels to the current timestep after every DDIM update.
    bool reimpose_each_step = false;
};

/// Shared tail of every application: DDIM from (x_I, vis, y) on a mesh, then
/// the optional known-region blend. Output is R x R x 3, in [-1, 1], zero off
/// the atlas.
Grid generate(const Pipeline& p, const net::SampleGeometry& geo, const Grid& partial, const Grid& known,
              const std::optional<std::vector<double>>& image_emb,
              const std::optional<std::vector<double>>& text_emb, const BlendOptions& blend = {});

struct InpaintRequest {
    Mesh mesh;
    Grid partial_texture;  // R x R x 3
    Grid known_mask;       // R x R x 1
    std::optional<std::string> prompt;
    BlendOptions blend;
};

/// Image embedding is the learned null. Throws PreconditionError when the
/// known mask reaches outside the atlas. Partial values outside the known
/// mask are ignored.
Grid inpaint(const InpaintRequest& req, const Pipeline& p);

struct PosedImage {
    Camera camera;
    Grid image;  // S x S x 3
};

struct CompletionResult {
    Grid texture;
    Grid partial;  // fused projection fed as x_I
    Grid known;    // fused visibility
    int embedding_view = 0;
};

/// Projects and fuses every view, picks one (seeded) for the image
/// embedding, then samples as in inpainting.
CompletionResult complete_sparse_views(const Mesh& mesh, const std::vector<PosedImage>& views,
                                       const std::optional<std::string>& prompt, const Pipeline& p,
                                       int resolution, const BlendOptions& blend = {});

/// Index of the view whose embedding conditions a completion.
int select_embedding_view(uint64_t seed, size_t view_count);

/// (depth image, prompt) -> RGB image aligned with the depth view.
class ImageGeneratorAdapter {
public:
    virtual ~ImageGeneratorAdapter() = default;
    virtual Grid generate(const Grid& depth, const std::string& prompt, const Camera& camera) const = 0;
};

/// Deterministic stand-in: with a reference texture it renders that texture
/// from the requested camera, otherwise it paints a prompt-hashed two-colour
/// checker onto the object silhouette.
class StubImageGenerator : public ImageGeneratorAdapter {
public:
    StubImageGenerator() = default;
    StubImageGenerator(Mesh mesh, Grid texture) : mesh_(std::move(mesh)), texture_(std::move(texture)) {}
    Grid generate(const Grid& depth, const std::string& prompt, const Camera& camera) const override;

private:
    std::optional<Mesh> mesh_;
    Grid texture_;
};

struct ViewpointPolicy {
    double azimuth = 0.0;  // 0 looks from +Z ("front")
    double elevation = 0.0;
    double distance_scale = 2.2;  // times the bounding radius
    double fov = 40.0;
    int image_size = 256;

    static ViewpointPolicy front() { return {}; }
    Camera camera(const Mesh& mesh) const;
};

struct TextToTextureResult {
    CompletionResult completion;
    Camera camera;
    Grid depth;
    Grid generated;
};

/// Depth render -> adapter image -> image+text conditioned completion.
/// Adapter failures are rethrown with the view parameters attached.
TextToTextureResult text_to_texture(const Mesh& mesh, const std::string& prompt,
                                    const ImageGeneratorAdapter& generator, const ViewpointPolicy& policy,
                                    const Pipeline& p, int resolution, const BlendOptions& blend = {});

}  // namespace texgen::apps

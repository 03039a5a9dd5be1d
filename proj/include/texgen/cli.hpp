#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "texgen/apps.hpp"
#include "texgen/diffusion.hpp"
#include "texgen/mesh_io.hpp"
#include "texgen/net.hpp"

namespace texgen::cli {

namespace fs = std::filesystem;

struct Paths {
    fs::path data = "data";
    fs::path checkpoint = "runs/toy/final.ckpt";
    fs::path out = "out";
};

/// One file configures every command. The top-level seed drives network
/// init, training and sampling streams.
struct RunConfig {
    std::string profile = "toy";
    uint64_t seed = 0;
    Paths paths;
    net::NetConfig net = net::NetConfig::toy();
    diffusion::DataOptions data;
    diffusion::TrainConfig train;
    diffusion::SamplerConfig sampler;
    /// Write a contact sheet of the first training sample at each checkpoint.
    bool preview_on_checkpoint = true;

    void validate() const;
    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; `net` overrides apply on top of the
    /// profile's defaults.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const fs::path& path);
};

nlohmann::json data_options_to_json(const diffusion::DataOptions& o);
diffusion::DataOptions data_options_from_json(const nlohmann::json& j, diffusion::DataOptions base = {});

/// Values given on the command line; unset fields fall through to the
/// environment and then to the config file.
struct Overrides {
    std::optional<uint64_t> seed;
    std::optional<std::string> profile;
    std::optional<double> guidance;
    std::optional<int> steps;
    std::optional<std::string> out;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

/// Reads TEXGEN_SEED, TEXGEN_PROFILE, TEXGEN_GUIDANCE, TEXGEN_STEPS, TEXGEN_OUT.
/// Throws ValidationError on unparsable values.
Overrides env_overrides(const EnvLookup& env);

/// Precedence: flag > env > file. `steps` lands in train.steps for training
/// commands and in sampler.steps otherwise.
RunConfig resolve_config(const std::optional<fs::path>& config_file, const Overrides& flags, const EnvLookup& env,
                         bool training_command);

/// Four renders at azimuths 0/90/180/270 and 20 degrees elevation, side by side.
Grid contact_sheet(const Mesh& mesh, const Grid& texture, int view_size = 128);
Camera sheet_camera(int k, int view_size);

/// Loads a manifest split into training samples. The atlas resolution is
/// taken from the textures, which must all agree.
std::vector<diffusion::TrainingSample> load_samples(const fs::path& data_dir, std::optional<Split> split,
                                                    const RunConfig& cfg);

/// A network restored from a checkpoint (its architecture comes from the
/// checkpoint header).
struct LoadedModel {
    std::unique_ptr<net::TexGenNet> net;
    diffusion::CheckpointInfo info;
};
LoadedModel load_model(const fs::path& checkpoint);

// ---------------------------------------------------------------------------
// Commands. Each returns a process exit status and writes its artifacts.

struct ToyDataArgs {
    fs::path out;
    uint64_t seed = 0;
    int count = 8;
    int resolution = 64;
};
int cmd_make_toy_data(const ToyDataArgs& a);

struct TrainArgs {
    RunConfig cfg;
    fs::path data_dir;
    fs::path run_dir;
    std::optional<fs::path> resume;
    std::string split = "train";  // train | eval | all
};
int cmd_train(const TrainArgs& a);

struct SampleArgs {
    RunConfig cfg;
    fs::path checkpoint;
    fs::path out_dir;
    // either a dataset sample conditioned on one of its ground-truth views ...
    std::optional<fs::path> data_dir;
    std::optional<std::string> sample_id;
    int view = 0;
    // ... or a mesh with a posed image
    std::optional<fs::path> mesh;
    std::optional<fs::path> image;
    std::optional<fs::path> camera;
    std::optional<std::string> prompt;
    bool preserve_known = false;
};
int cmd_sample(const SampleArgs& a);

struct InpaintArgs {
    RunConfig cfg;
    fs::path checkpoint;
    fs::path out_dir;
    fs::path mesh;
    fs::path texture;
    fs::path mask;
    std::optional<std::string> prompt;
    apps::BlendOptions blend;
};
int cmd_inpaint(const InpaintArgs& a);

struct CompleteArgs {
    RunConfig cfg;
    fs::path checkpoint;
    fs::path out_dir;
    fs::path mesh;
    std::vector<std::pair<fs::path, fs::path>> views;  // (image, camera json)
    std::optional<std::string> prompt;
    apps::BlendOptions blend;
};
int cmd_complete(const CompleteArgs& a);

struct Text2TexArgs {
    RunConfig cfg;
    fs::path checkpoint;
    fs::path out_dir;
    fs::path mesh;
    std::string prompt;
    apps::ViewpointPolicy viewpoint;
    /// Texture the stub generator renders instead of its checker.
    std::optional<fs::path> reference_texture;
};
int cmd_text2tex(const Text2TexArgs& a);

struct EvalArgs {
    RunConfig cfg;
    std::optional<fs::path> checkpoint;
    /// Directory of <id>.ppm textures to score instead of sampling.
    std::optional<fs::path> predictions;
    fs::path data_dir;
    fs::path out_dir;
    std::string split = "eval";
    int view = 0;
};
int cmd_eval(const EvalArgs& a);

/// Per-sample scores: atlas PSNR plus PSNR/SSIM averaged over the
/// contact-sheet renders.
struct EvalScores {
    double atlas_psnr = 0, render_psnr = 0, render_ssim = 0;
};
EvalScores score_texture(const Mesh& mesh, const Grid& predicted, const Grid& truth, int view_size = 128);

}  // namespace texgen::cli

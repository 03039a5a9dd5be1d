#include "texgen/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "texgen/image_io.hpp"
#include "texgen/metrics.hpp"

namespace texgen::cli {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

json data_options_to_json(const diffusion::DataOptions& o) {
    return {{"resolution", o.resolution},
            {"condition_views", o.condition_views},
            {"condition_image_size", o.condition_image_size},
            {"render_views", o.render_views},
            {"render_size", o.render_size},
            {"camera_distance", o.camera_distance},
            {"fov", o.fov}};
}

diffusion::DataOptions data_options_from_json(const json& j, diffusion::DataOptions o) {
    try {
        o.resolution = j.value("resolution", o.resolution);
        o.condition_views = j.value("condition_views", o.condition_views);
        o.condition_image_size = j.value("condition_image_size", o.condition_image_size);
        o.render_views = j.value("render_views", o.render_views);
        o.render_size = j.value("render_size", o.render_size);
        o.camera_distance = j.value("camera_distance", o.camera_distance);
        o.fov = j.value("fov", o.fov);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("data options: ") + e.what());
    }
    return o;
}

void RunConfig::validate() const {
    if (profile != "toy" && profile != "full") throw ValidationError("profile must be toy or full, got " + profile);
    if (net.profile != profile) throw ValidationError("net config belongs to profile " + net.profile);
    net.validate();
    train.validate();
    sampler.validate();
    if (!is_power_of_two(data.resolution) || data.resolution < 16)
        throw ValidationError("data.resolution must be a power of two >= 16");
    if (data.condition_views < 1 || data.render_views < 1 || data.condition_image_size < 8 || data.render_size < 8)
        throw ValidationError("data: view counts and sizes must be positive");
    if (data.render_views < train.render_views)
        throw ValidationError("data.render_views must be >= train.render_views");
}

json RunConfig::to_json() const {
    json tj = train.to_json(), sj = sampler.to_json();
    tj["seed"] = seed;
    sj["seed"] = seed;
    return {{"profile", profile},
            {"seed", seed},
            {"paths", {{"data", paths.data.string()}, {"checkpoint", paths.checkpoint.string()}, {"out", paths.out.string()}}},
            {"net", net.to_json()},
            {"data", data_options_to_json(data)},
            {"train", tj},
            {"sampler", sj},
            {"preview_on_checkpoint", preview_on_checkpoint}};
}

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("run config must be a JSON object");
    RunConfig c;
    try {
        c.profile = j.value("profile", c.profile);
        c.seed = j.value("seed", c.seed);
        if (j.contains("paths")) {
            const json& p = j.at("paths");
            c.paths.data = p.value("data", c.paths.data.string());
            c.paths.checkpoint = p.value("checkpoint", c.paths.checkpoint.string());
            c.paths.out = p.value("out", c.paths.out.string());
        }
        json nj = j.value("net", json::object());
        nj["profile"] = c.profile;
        c.net = net::NetConfig::from_json(nj);
        c.data = data_options_from_json(j.value("data", json::object()));
        c.train = diffusion::TrainConfig::from_json(j.value("train", json::object()));
        c.sampler = diffusion::SamplerConfig::from_json(j.value("sampler", json::object()));
        c.preview_on_checkpoint = j.value("preview_on_checkpoint", c.preview_on_checkpoint);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("run config: ") + e.what());
    }
    // one seed for everything
    c.train.seed = c.seed;
    c.sampler.seed = c.seed;
    c.validate();
    return c;
}

namespace {

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
}

template <class T>
T parse_number(const std::string& name, const std::string& text) {
    std::istringstream in(text);
    T v{};
    in >> v;
    if (in.fail() || !(in >> std::ws).eof()) throw ValidationError(name + ": cannot parse '" + text + "'");
    return v;
}

}  // namespace

RunConfig RunConfig::load(const fs::path& path) { return from_json(read_json_file(path)); }

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (!v || !*v) return std::nullopt;
        return std::string(v);
    };
}

Overrides env_overrides(const EnvLookup& env) {
    Overrides o;
    if (auto v = env("TEXGEN_SEED")) o.seed = parse_number<uint64_t>("TEXGEN_SEED", *v);
    if (auto v = env("TEXGEN_PROFILE")) o.profile = *v;
    if (auto v = env("TEXGEN_GUIDANCE")) o.guidance = parse_number<double>("TEXGEN_GUIDANCE", *v);
    if (auto v = env("TEXGEN_STEPS")) o.steps = parse_number<int>("TEXGEN_STEPS", *v);
    if (auto v = env("TEXGEN_OUT")) o.out = *v;
    return o;
}

RunConfig resolve_config(const std::optional<fs::path>& config_file, const Overrides& flags, const EnvLookup& env,
                         bool training_command) {
    json j = config_file ? read_json_file(*config_file) : json::object();
    if (!j.is_object()) throw ValidationError("run config must be a JSON object");
    const Overrides e = env ? env_overrides(env) : Overrides{};
    auto pick = [](const auto& flag, const auto& envv) { return flag ? flag : envv; };

    if (auto p = pick(flags.profile, e.profile)) j["profile"] = *p;
    if (auto s = pick(flags.seed, e.seed)) j["seed"] = *s;
    if (auto g = pick(flags.guidance, e.guidance)) j["sampler"]["guidance"] = *g;
    if (auto n = pick(flags.steps, e.steps)) j[training_command ? "train" : "sampler"]["steps"] = *n;
    if (auto o = pick(flags.out, e.out)) j["paths"]["out"] = *o;
    return RunConfig::from_json(j);
}

// ---------------------------------------------------------------------------
// Shared plumbing

Camera sheet_camera(int k, int view_size) { return orbit_camera(90.0 * k, 20.0, 3.2, 40.0, view_size); }

Grid contact_sheet(const Mesh& mesh, const Grid& texture, int view_size) {
    Grid sheet(view_size, view_size * 4, 3);
    for (int k = 0; k < 4; ++k) {
        Grid img = render_view(mesh, texture, sheet_camera(k, view_size)).image;
        for (int y = 0; y < view_size; ++y)
            for (int x = 0; x < view_size; ++x)
                for (int c = 0; c < 3; ++c) sheet.at(y, k * view_size + x, c) = img.at(y, x, c);
    }
    return sheet;
}

namespace {

struct Embedders {
    net::PoolingImageEmbedder image;
    net::HashingTextEmbedder text;
};

Embedders make_embedders(const net::NetConfig& cfg) {
    const int cells = static_cast<int>(std::lround(std::sqrt(cfg.image_emb_dim / 3.0)));
    if (cells * cells * 3 != cfg.image_emb_dim)
        throw ValidationError("image_emb_dim must be 3 * k^2 for the pooling image embedder");
    return {net::PoolingImageEmbedder(cells), net::HashingTextEmbedder(cfg.text_emb_dim)};
}

std::optional<Split> parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "eval") return Split::eval;
    if (s == "all") return std::nullopt;
    throw ValidationError("split must be train, eval or all, got " + s);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

void write_outputs(const fs::path& out_dir, const Mesh& mesh, const Grid& texture) {
    ensure_dir(out_dir);
    write_ppm(out_dir / "texture.ppm", texture);
    write_ppm(out_dir / "sheet.ppm", contact_sheet(mesh, texture));
}

Grid read_mask(const fs::path& path) {
    Grid img = read_ppm(path);
    Grid m(img.height, img.width, 1);
    for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = img.data[i * 3] > 0.0 ? 1.0 : 0.0;
    return m;
}

Camera read_camera(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open camera " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return camera_from_json(ss.str());
}

struct Session {
    LoadedModel model;
    diffusion::Scheduler sched = diffusion::Scheduler::build();
    Embedders emb;
    diffusion::SamplerConfig sampler;

    Session(const fs::path& ckpt, const RunConfig& cfg)
        : model(load_model(ckpt)), emb(make_embedders(model.info.net_config)), sampler(cfg.sampler) {}
    apps::Pipeline pipeline() const { return {*model.net, sched, emb.image, emb.text, sampler}; }
};

// Image-conditioned sample of a dataset mesh from one of its ground-truth views.
Grid sample_from_truth(const Session& s, const Mesh& mesh, const Grid& truth, const std::string& caption,
                       const RunConfig& cfg, int view, bool preserve_known) {
    diffusion::DataOptions opts = cfg.data;
    opts.resolution = truth.height;
    const Camera cam = diffusion::condition_camera(view, opts, opts.condition_image_size);
    apps::PosedImage pi{cam, render_view(mesh, truth, cam).image};
    return apps::complete_sparse_views(mesh, {pi}, caption, s.pipeline(), truth.height, {preserve_known, false})
        .texture;
}

}  // namespace

std::vector<diffusion::TrainingSample> load_samples(const fs::path& data_dir, std::optional<Split> split,
                                                    const RunConfig& cfg) {
    DatasetManifest manifest = load_manifest(data_dir / kManifestName);
    std::vector<DatasetSample> chosen = split ? manifest.by_split(*split) : manifest.samples;
    if (chosen.empty()) throw ValidationError("no samples in the requested split of " + data_dir.string());
    Embedders emb = make_embedders(cfg.net);
    std::vector<diffusion::TrainingSample> out;
    int resolution = 0;
    for (const DatasetSample& d : chosen) {
        Mesh mesh = load_mesh(d.mesh_path);
        Grid tex = read_ppm(d.texture_path);
        if (resolution == 0) resolution = tex.height;
        if (tex.height != resolution || tex.width != resolution)
            throw ValidationError("sample " + d.id + ": textures in one run must share a resolution");
        diffusion::DataOptions opts = cfg.data;
        opts.resolution = resolution;
        out.push_back(diffusion::prepare_sample(d.id, mesh, tex, d.caption, cfg.net, opts, emb.image, emb.text));
    }
    return out;
}

LoadedModel load_model(const fs::path& checkpoint) {
    LoadedModel m;
    m.info = diffusion::read_checkpoint_info(checkpoint);
    m.net = std::make_unique<net::TexGenNet>(m.info.net_config, 0);
    diffusion::load_checkpoint(checkpoint, *m.net);
    return m;
}

EvalScores score_texture(const Mesh& mesh, const Grid& predicted, const Grid& truth, int view_size) {
    require(predicted.same_shape(truth), "eval: predicted texture shape differs from ground truth");
    GeometryMaps g = rasterize_uv(mesh, truth.height);
    EvalScores s;
    s.atlas_psnr = psnr(predicted, truth, &g.mask_map);
    for (int k = 0; k < 4; ++k) {
        const Camera cam = sheet_camera(k, view_size);
        const Grid a = render_view(mesh, predicted, cam).image, b = render_view(mesh, truth, cam).image;
        s.render_psnr += psnr(a, b) / 4.0;
        s.render_ssim += ssim(a, b) / 4.0;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_make_toy_data(const ToyDataArgs& a) {
    DatasetManifest m = make_toy_dataset(a.seed, a.count, a.out, a.resolution);
    std::cout << "wrote " << m.samples.size() << " samples to " << a.out.string() << "\n";
    return 0;
}

int cmd_train(const TrainArgs& a) {
    const RunConfig& cfg = a.cfg;
    ensure_dir(a.run_dir);
    std::vector<diffusion::TrainingSample> data = load_samples(a.data_dir, parse_split(a.split), cfg);

    net::TexGenNet model(cfg.net, cfg.seed);
    const diffusion::Scheduler sched = diffusion::Scheduler::build();
    diffusion::Trainer trainer(model, cfg.train, sched);
    if (a.resume) {
        diffusion::CheckpointInfo info = diffusion::load_checkpoint(*a.resume, model, &trainer.optimizer());
        trainer.set_step_count(info.step);
        std::cout << "resumed at step " << info.step << "\n";
    }
    {
        std::ofstream c(a.run_dir / "config.json");
        c << cfg.to_json().dump(2) << "\n";
    }
    std::ofstream log(a.run_dir / "metrics.jsonl", a.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write metrics log in " + a.run_dir.string());

    auto checkpoint = [&](const fs::path& path) {
        diffusion::save_checkpoint(path, model, &trainer.optimizer(), trainer.step_count(), cfg.train);
    };
    while (trainer.step_count() < cfg.train.steps) {
        diffusion::StepMetrics m = trainer.step(data);
        if (m.step % cfg.train.log_every == 0) {
            log << m.to_json().dump() << "\n";
            log.flush();
        }
        if (m.step % 50 == 0 || m.step == cfg.train.steps)
            std::cout << "step " << m.step << " loss " << m.loss << "\n";
        if (cfg.train.checkpoint_every > 0 && m.step % cfg.train.checkpoint_every == 0 && m.step < cfg.train.steps) {
            std::ostringstream name;
            name << "step_" << std::setw(6) << std::setfill('0') << m.step;
            checkpoint(a.run_dir / (name.str() + ".ckpt"));
            if (cfg.preview_on_checkpoint) {
                const diffusion::TrainingSample& s = data.front();
                diffusion::Conditioning cond{s.condition_views[0].partial, s.condition_views[0].visibility,
                                             s.condition_views[0].image_emb, s.text_emb};
                std::vector<double> x = diffusion::sample_texture(sched, model, *s.geo, cond, cfg.sampler);
                Grid tex(s.geo->resolution, s.geo->resolution, 3);
                tex.data = std::move(x);
                ensure_dir(a.run_dir / "samples");
                write_ppm(a.run_dir / "samples" / (name.str() + ".ppm"), contact_sheet(s.mesh, tex));
            }
        }
    }
    checkpoint(a.run_dir / "final.ckpt");
    return 0;
}

int cmd_sample(const SampleArgs& a) {
    Session s(a.checkpoint, a.cfg);
    Mesh mesh;
    Grid tex;
    if (a.data_dir) {
        DatasetManifest manifest = load_manifest(*a.data_dir / kManifestName);
        const DatasetSample* pick = nullptr;
        for (const DatasetSample& d : manifest.samples)
            if (!a.sample_id || d.id == *a.sample_id) {
                pick = &d;
                break;
            }
        if (!pick) throw ValidationError("sample id not found in " + a.data_dir->string());
        mesh = load_mesh(pick->mesh_path);
        Grid truth = read_ppm(pick->texture_path);
        tex = sample_from_truth(s, mesh, truth, a.prompt.value_or(pick->caption), a.cfg, a.view, a.preserve_known);
        GeometryMaps g = rasterize_uv(mesh, truth.height);
        std::cout << pick->id << " atlas psnr " << psnr(quantize8(tex), truth, &g.mask_map) << " dB\n";
    } else {
        if (!a.mesh || !a.image || !a.camera) throw ValidationError("sample needs --data or --mesh/--image/--camera");
        mesh = load_mesh(*a.mesh);
        apps::PosedImage pi{read_camera(*a.camera), read_ppm(*a.image)};
        tex = apps::complete_sparse_views(mesh, {pi}, a.prompt, s.pipeline(), a.cfg.data.resolution,
                                          {a.preserve_known, false})
                  .texture;
    }
    write_outputs(a.out_dir, mesh, tex);
    return 0;
}

int cmd_inpaint(const InpaintArgs& a) {
    Session s(a.checkpoint, a.cfg);
    apps::InpaintRequest req;
    req.mesh = load_mesh(a.mesh);
    req.partial_texture = read_ppm(a.texture);
    req.known_mask = read_mask(a.mask);
    req.prompt = a.prompt;
    req.blend = a.blend;
    if (req.known_mask.height != req.partial_texture.height || req.known_mask.width != req.partial_texture.width)
        throw ValidationError("mask and texture sizes differ");
    write_outputs(a.out_dir, req.mesh, apps::inpaint(req, s.pipeline()));
    return 0;
}

int cmd_complete(const CompleteArgs& a) {
    if (a.views.empty()) throw ValidationError("complete needs at least one --view");
    Session s(a.checkpoint, a.cfg);
    Mesh mesh = load_mesh(a.mesh);
    std::vector<apps::PosedImage> views;
    for (const auto& [img, cam] : a.views) views.push_back({read_camera(cam), read_ppm(img)});
    apps::CompletionResult r =
        apps::complete_sparse_views(mesh, views, a.prompt, s.pipeline(), a.cfg.data.resolution, a.blend);
    write_outputs(a.out_dir, mesh, r.texture);
    write_ppm(a.out_dir / "partial.ppm", r.partial);
    return 0;
}

int cmd_text2tex(const Text2TexArgs& a) {
    Session s(a.checkpoint, a.cfg);
    Mesh mesh = load_mesh(a.mesh);
    apps::StubImageGenerator gen = a.reference_texture ? apps::StubImageGenerator(mesh, read_ppm(*a.reference_texture))
                                                       : apps::StubImageGenerator();
    apps::TextToTextureResult r =
        apps::text_to_texture(mesh, a.prompt, gen, a.viewpoint, s.pipeline(), a.cfg.data.resolution);
    write_outputs(a.out_dir, mesh, r.completion.texture);
    Grid depth3(r.depth.height, r.depth.width, 3);
    for (size_t i = 0; i < r.depth.data.size(); ++i)
        for (int c = 0; c < 3; ++c) depth3.data[i * 3 + c] = 2.0 * r.depth.data[i] - 1.0;
    write_ppm(a.out_dir / "depth.ppm", depth3);
    write_ppm(a.out_dir / "generated.ppm", r.generated);
    return 0;
}

int cmd_eval(const EvalArgs& a) {
    if (!a.checkpoint && !a.predictions) throw ValidationError("eval needs --checkpoint or --predictions");
    DatasetManifest manifest = load_manifest(a.data_dir / kManifestName);
    const std::optional<Split> split = parse_split(a.split);
    std::vector<DatasetSample> chosen = split ? manifest.by_split(*split) : manifest.samples;
    if (chosen.empty()) throw ValidationError("eval split is empty in " + a.data_dir.string());
    std::unique_ptr<Session> session;
    if (!a.predictions) session = std::make_unique<Session>(*a.checkpoint, a.cfg);

    ensure_dir(a.out_dir);
    std::ofstream rows(a.out_dir / "eval.jsonl");
    EvalScores mean;
    for (const DatasetSample& d : chosen) {
        Mesh mesh = load_mesh(d.mesh_path);
        Grid truth = read_ppm(d.texture_path);
        Grid pred = a.predictions ? read_ppm(*a.predictions / (d.id + ".ppm"))
                                  : quantize8(sample_from_truth(*session, mesh, truth, d.caption, a.cfg, a.view, false));
        EvalScores s = score_texture(mesh, pred, truth);
        rows << json{{"id", d.id}, {"atlas_psnr", s.atlas_psnr}, {"render_psnr", s.render_psnr},
                     {"render_ssim", s.render_ssim}}
                    .dump()
             << "\n";
        const double n = static_cast<double>(chosen.size());
        mean.atlas_psnr += s.atlas_psnr / n;
        mean.render_psnr += s.render_psnr / n;
        mean.render_ssim += s.render_ssim / n;
    }
    json summary{{"count", chosen.size()},
                 {"split", a.split},
                 {"atlas_psnr", mean.atlas_psnr},
                 {"render_psnr", mean.render_psnr},
                 {"render_ssim", mean.render_ssim},
                 {"psnr_cap", kPsnrCap},
                 // slot for feature-network metrics (FID/KID) supplied externally
                 {"external", nullptr}};
    std::ofstream(a.out_dir / "eval_summary.json") << summary.dump(2) << "\n";
    std::cout << summary.dump() << "\n";
    return 0;
}

}  // namespace texgen::cli

// texgen command-line front end. Parsing lives here, the commands in the library.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "texgen/cli.hpp"

using namespace texgen;
using namespace texgen::cli;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;
constexpr int kNumericalError = 3;

// Flags every pipeline command accepts. Unset means "fall through to env, then file".
struct CommonFlags {
    std::optional<std::string> config;
    std::optional<uint64_t> seed;
    std::optional<std::string> profile;
    std::optional<double> guidance;
    std::optional<int> steps;
    std::optional<std::string> out;

    void add(CLI::App* app) {
        app->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);
        app->add_option("--seed", seed, "Seed for init, training and sampling");
        app->add_option("--profile", profile, "Model profile (toy|full)");
        app->add_option("--guidance", guidance, "Classifier-free guidance weight");
        app->add_option("--steps", steps, "Training steps (train) or DDIM steps (others)");
        app->add_option("--out", out, "Output directory");
    }
    RunConfig resolve(bool training) const {
        Overrides o{seed, profile, guidance, steps, out};
        std::optional<fs::path> file;
        if (config) file = *config;
        return resolve_config(file, o, process_env(), training);
    }
};

void add_blend_flags(CLI::App* app, apps::BlendOptions& blend, bool preserve_default) {
    blend.preserve_known = preserve_default;
    app->add_flag("--preserve-known,!--no-preserve-known", blend.preserve_known,
                  "Copy known texels into the result after sampling");
    app->add_flag("--reimpose", blend.reimpose_each_step, "Re-noise known texels after every DDIM update");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mesh texture generation in UV space"};
    app.require_subcommand(1);

    // make-toy-data
    ToyDataArgs toy;
    std::string toy_out;
    auto* mk = app.add_subcommand("make-toy-data", "Write a procedural textured-mesh dataset");
    mk->add_option("--out", toy_out, "Output directory")->required();
    mk->add_option("--seed", toy.seed, "Dataset seed");
    mk->add_option("--count", toy.count, "Number of samples")->check(CLI::PositiveNumber);
    mk->add_option("--res", toy.resolution, "Texture resolution (64, 128 or 256)");

    // train
    CommonFlags train_flags;
    TrainArgs train;
    std::optional<std::string> train_data, resume;
    auto* tr = app.add_subcommand("train", "Train from a dataset manifest");
    train_flags.add(tr);
    tr->add_option("--data", train_data, "Dataset directory (default: paths.data)");
    tr->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
    tr->add_option("--split", train.split, "train | eval | all");

    // sample
    CommonFlags sample_flags;
    SampleArgs sample;
    std::optional<std::string> s_ckpt, s_data, s_mesh, s_image, s_camera;
    auto* sa = app.add_subcommand("sample", "Image-conditioned texture generation");
    sample_flags.add(sa);
    sa->add_option("--checkpoint", s_ckpt, "Model checkpoint (default: paths.checkpoint)");
    sa->add_option("--data", s_data, "Dataset directory; condition on a ground-truth view");
    sa->add_option("--id", sample.sample_id, "Dataset sample id (default: first)");
    sa->add_option("--view", sample.view, "Ground-truth conditioning view index");
    sa->add_option("--mesh", s_mesh, "Mesh (OBJ) when not using --data");
    sa->add_option("--image", s_image, "Conditioning image (PPM)");
    sa->add_option("--camera", s_camera, "Camera JSON of the image");
    sa->add_option("--prompt", sample.prompt, "Text prompt");
    sa->add_flag("--preserve-known", sample.preserve_known, "Copy projected texels into the result");

    // inpaint
    CommonFlags inp_flags;
    InpaintArgs inp;
    std::optional<std::string> i_ckpt;
    std::string i_mesh, i_tex, i_mask;
    auto* ip = app.add_subcommand("inpaint", "Fill the unknown region of a partial texture");
    inp_flags.add(ip);
    ip->add_option("--checkpoint", i_ckpt, "Model checkpoint (default: paths.checkpoint)");
    ip->add_option("--mesh", i_mesh, "Mesh (OBJ)")->required();
    ip->add_option("--texture", i_tex, "Partial texture (PPM)")->required();
    ip->add_option("--mask", i_mask, "Known-texel mask (PPM, bright = known)")->required();
    ip->add_option("--prompt", inp.prompt, "Text prompt");
    add_blend_flags(ip, inp.blend, true);

    // complete
    CommonFlags cmp_flags;
    CompleteArgs cmp;
    std::optional<std::string> c_ckpt;
    std::string c_mesh;
    std::vector<std::string> c_views;
    auto* cp = app.add_subcommand("complete", "Complete a texture from sparse posed views");
    cmp_flags.add(cp);
    cp->add_option("--checkpoint", c_ckpt, "Model checkpoint (default: paths.checkpoint)");
    cp->add_option("--mesh", c_mesh, "Mesh (OBJ)")->required();
    cp->add_option("--view", c_views, "IMAGE.ppm:CAMERA.json (repeatable)")->required();
    cp->add_option("--prompt", cmp.prompt, "Text prompt");
    add_blend_flags(cp, cmp.blend, true);

    // text2tex
    CommonFlags t2_flags;
    Text2TexArgs t2;
    std::optional<std::string> t_ckpt, t_ref;
    std::string t_mesh;
    auto* tt = app.add_subcommand("text2tex", "Text-to-texture through a depth-conditioned image generator");
    t2_flags.add(tt);
    tt->add_option("--checkpoint", t_ckpt, "Model checkpoint (default: paths.checkpoint)");
    tt->add_option("--mesh", t_mesh, "Mesh (OBJ)")->required();
    tt->add_option("--prompt", t2.prompt, "Text prompt")->required();
    tt->add_option("--azimuth", t2.viewpoint.azimuth, "Viewpoint azimuth in degrees (0 = front)");
    tt->add_option("--elevation", t2.viewpoint.elevation, "Viewpoint elevation in degrees");
    tt->add_option("--view-size", t2.viewpoint.image_size, "Generated image size")->check(CLI::PositiveNumber);
    tt->add_option("--reference-texture", t_ref, "Stub generator renders this texture instead of a checker");

    // eval
    CommonFlags ev_flags;
    EvalArgs ev;
    std::optional<std::string> e_ckpt, e_pred, e_data;
    auto* ea = app.add_subcommand("eval", "PSNR/SSIM of renders against ground truth");
    ev_flags.add(ea);
    ea->add_option("--checkpoint", e_ckpt, "Model checkpoint (sampled predictions)");
    ea->add_option("--predictions", e_pred, "Directory of <id>.ppm textures to score instead");
    ea->add_option("--data", e_data, "Dataset directory (default: paths.data)");
    ea->add_option("--split", ev.split, "train | eval | all");
    ea->add_option("--view", ev.view, "Ground-truth conditioning view index");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    auto path_or = [](const std::optional<std::string>& v, const fs::path& fallback) {
        return v ? fs::path(*v) : fallback;
    };
    try {
        if (*mk) {
            toy.out = toy_out;
            return cmd_make_toy_data(toy);
        }
        if (*tr) {
            train.cfg = train_flags.resolve(true);
            train.data_dir = path_or(train_data, train.cfg.paths.data);
            train.run_dir = train.cfg.paths.out;
            if (resume) train.resume = fs::path(*resume);
            return cmd_train(train);
        }
        if (*sa) {
            sample.cfg = sample_flags.resolve(false);
            sample.checkpoint = path_or(s_ckpt, sample.cfg.paths.checkpoint);
            sample.out_dir = sample.cfg.paths.out;
            if (s_data) sample.data_dir = fs::path(*s_data);
            if (s_mesh) sample.mesh = fs::path(*s_mesh);
            if (s_image) sample.image = fs::path(*s_image);
            if (s_camera) sample.camera = fs::path(*s_camera);
            if (!s_data && !s_mesh) sample.data_dir = sample.cfg.paths.data;
            return cmd_sample(sample);
        }
        if (*ip) {
            inp.cfg = inp_flags.resolve(false);
            inp.checkpoint = path_or(i_ckpt, inp.cfg.paths.checkpoint);
            inp.out_dir = inp.cfg.paths.out;
            inp.mesh = i_mesh;
            inp.texture = i_tex;
            inp.mask = i_mask;
            return cmd_inpaint(inp);
        }
        if (*cp) {
            cmp.cfg = cmp_flags.resolve(false);
            cmp.checkpoint = path_or(c_ckpt, cmp.cfg.paths.checkpoint);
            cmp.out_dir = cmp.cfg.paths.out;
            cmp.mesh = c_mesh;
            for (const std::string& v : c_views) {
                const size_t colon = v.rfind(':');
                if (colon == std::string::npos || colon == 0 || colon + 1 == v.size()) {
                    std::cerr << "--view expects IMAGE.ppm:CAMERA.json, got " << v << "\n";
                    return kUsageError;
                }
                cmp.views.emplace_back(v.substr(0, colon), v.substr(colon + 1));
            }
            return cmd_complete(cmp);
        }
        if (*tt) {
            t2.cfg = t2_flags.resolve(false);
            t2.checkpoint = path_or(t_ckpt, t2.cfg.paths.checkpoint);
            t2.out_dir = t2.cfg.paths.out;
            t2.mesh = t_mesh;
            if (t_ref) t2.reference_texture = fs::path(*t_ref);
            return cmd_text2tex(t2);
        }
        if (*ea) {
            ev.cfg = ev_flags.resolve(false);
            if (e_ckpt) ev.checkpoint = fs::path(*e_ckpt);
            if (e_pred) ev.predictions = fs::path(*e_pred);
            if (!e_ckpt && !e_pred) ev.checkpoint = ev.cfg.paths.checkpoint;
            ev.data_dir = path_or(e_data, ev.cfg.paths.data);
            ev.out_dir = ev.cfg.paths.out;
            return cmd_eval(ev);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumericalError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kUsageError;
}

#include "texgen/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>

namespace texgen::diffusion {

using namespace texgen::ag;

// ---------------------------------------------------------------------------
// Schedule

Scheduler Scheduler::build(double snr_gamma, bool terminal_weight_floor) {
    const int n = kMaxTimestep + 1;
    const double lo = std::sqrt(0.00085), hi = std::sqrt(0.012);
    Scheduler s;
    s.base_alpha_bar.resize(n);
    double prod = 1.0;
    for (int i = 0; i < n; ++i) {
        double sb = lo + (hi - lo) * i / kMaxTimestep;
        prod *= 1.0 - sb * sb;
        s.base_alpha_bar[i] = prod;
    }
    // Shift sqrt(alpha_bar) so the last entry is 0, scale so the first is kept.
    const double s0 = std::sqrt(s.base_alpha_bar.front());
    const double sT = std::sqrt(s.base_alpha_bar.back());
    s.alpha_bar.resize(n);
    for (int i = 0; i < n; ++i) {
        double r = (std::sqrt(s.base_alpha_bar[i]) - sT) * s0 / (s0 - sT);
        s.alpha_bar[i] = r * r;
    }
    s.alpha_bar.front() = s.base_alpha_bar.front();
    s.alpha_bar.back() = 0.0;
    s.lambda.resize(n);
    for (int i = 0; i < n; ++i) {
        double snr = s.snr(i);
        s.lambda[i] = snr * snr_gamma / ((snr + snr_gamma) * (snr + 1.0));
    }
    if (terminal_weight_floor) s.lambda[kMaxTimestep] = std::max(s.lambda[kMaxTimestep], s.lambda[kMaxTimestep - 1]);
    return s;
}

double Scheduler::snr(int t) const {
    double a = alpha_bar.at(t);
    return a / (1.0 - a);
}

void check_timestep(int t) {
    if (t < 0 || t > kMaxTimestep) throw PreconditionError("timestep must be in [0, 1000], got " + std::to_string(t));
}

namespace {

void check_same(const std::vector<double>& a, const std::vector<double>& b, const char* what) {
    if (a.size() != b.size()) throw PreconditionError(std::string(what) + ": size mismatch");
}

}  // namespace

std::vector<double> add_noise(const Scheduler& s, const std::vector<double>& x0, int t,
                              const std::vector<double>& eps) {
    check_timestep(t);
    check_same(x0, eps, "add_noise");
    const double a = s.sqrt_ab(t), b = s.sqrt_1mab(t);
    std::vector<double> out(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

std::vector<double> v_target(const Scheduler& s, const std::vector<double>& x0, const std::vector<double>& eps,
                             int t) {
    check_timestep(t);
    check_same(x0, eps, "v_target");
    const double a = s.sqrt_ab(t), b = s.sqrt_1mab(t);
    std::vector<double> out(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) out[i] = a * eps[i] - b * x0[i];
    return out;
}

Decomposition from_v(const Scheduler& s, const std::vector<double>& x_t, const std::vector<double>& v, int t) {
    check_timestep(t);
    check_same(x_t, v, "from_v");
    const double a = s.sqrt_ab(t), b = s.sqrt_1mab(t);
    Decomposition d;
    d.x0.resize(x_t.size());
    d.eps.resize(x_t.size());
    for (size_t i = 0; i < x_t.size(); ++i) {
        d.x0[i] = a * x_t[i] - b * v[i];
        d.eps[i] = b * x_t[i] + a * v[i];
    }
    return d;
}

std::vector<double> cfg_combine(const std::vector<double>& v_uncond, const std::vector<double>& v_cond,
                                double guidance) {
    check_same(v_uncond, v_cond, "cfg_combine");
    std::vector<double> out(v_cond.size());
    // v_u + w (v_c - v_u), arranged so w = 1 and w = 0 return an input exactly
    const double wu = 1.0 - guidance;
    for (size_t i = 0; i < out.size(); ++i) out[i] = wu * v_uncond[i] + guidance * v_cond[i];
    return out;
}

// ---------------------------------------------------------------------------
// Rendering

std::shared_ptr<const SparseMap> build_lookup(const ViewRaster& raster, const Grid& mask) {
    require(mask.height == mask.width && mask.channels == 1, "build_lookup: mask must be square, one channel");
    const int R = mask.height;
    const int S = raster.size;
    std::vector<std::tuple<int, int, double>> trip;
    for (int p = 0; p < S * S; ++p) {
        if (raster.valid.data[p] < 0.5) continue;
        auto taps = bilinear_taps(raster.uv_buffer.data[p * 2], raster.uv_buffer.data[p * 2 + 1], R, R);
        double wsum = 0;
        for (auto [idx, w] : taps)
            if (mask.data[idx] > 0.5) wsum += w;
        if (wsum <= 1e-12) continue;
        for (auto [idx, w] : taps)
            if (mask.data[idx] > 0.5 && w > 0) trip.emplace_back(p, idx, w / wsum);
    }
    return SparseMap::from_triplets(S * S, R * R, trip);
}

RenderTarget make_render_target(const Mesh& mesh, const GeometryMaps& geometry, const Grid& texture,
                                const Camera& camera) {
    require(texture.height == geometry.resolution && texture.width == geometry.resolution && texture.channels == 3,
            "render target: texture must match the geometry resolution");
    RenderTarget rt;
    rt.camera = camera;
    rt.size = camera.image_size;
    rt.lookup = build_lookup(rasterize_view(mesh, camera), geometry.mask_map);
    rt.image = gather(Tensor::constant(geometry.resolution * geometry.resolution, 3, texture.data), rt.lookup).value();
    return rt;
}

Tensor render(const Tensor& texture, const RenderTarget& view) { return gather(texture, view.lookup); }

std::shared_ptr<const SparseMap> pyramid_reduce(int size) {
    require(size >= 2 && size % 2 == 0, "pyramid_reduce: size must be even");
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const SparseMap>> cache;
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(size); it != cache.end()) return it->second;
    static constexpr double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
    const int h = size / 2;
    std::vector<std::tuple<int, int, double>> trip;
    trip.reserve(static_cast<size_t>(h) * h * 25);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < h; ++j)
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx) {
                    int r = std::clamp(2 * i + dy, 0, size - 1);
                    int c = std::clamp(2 * j + dx, 0, size - 1);
                    trip.emplace_back(i * h + j, r * size + c, k[dy + 2] * k[dx + 2]);
                }
    auto map = SparseMap::from_triplets(h * h, size * size, trip);
    cache[size] = map;
    return map;
}

Tensor PyramidL1::operator()(const Tensor& image, const std::vector<double>& target, int size) const {
    require(image.rows() == size * size && image.cols() == 3 && target.size() == image.size(),
            "perceptual: image and target must be size^2 x 3");
    require(size % (1 << (levels_ - 1)) == 0, "perceptual: size must be divisible by 2^(levels-1)");
    Tensor a = image;
    Tensor b = Tensor::constant(size * size, 3, target);
    Tensor total;
    int s = size;
    for (int l = 0; l < levels_; ++l) {
        Tensor term = mean(ag::abs(sub(a, b)));
        total = total.defined() ? add(total, term) : term;
        if (l + 1 < levels_) {
            auto red = pyramid_reduce(s);
            a = gather(a, red);
            b = gather(b, red).detach();
            s /= 2;
        }
    }
    return scale(total, 1.0 / levels_);
}

// ---------------------------------------------------------------------------
// Data

std::vector<double> atlas_target(const Grid& texture, const Grid& mask) {
    require(texture.texels() == mask.texels() && texture.channels == 3, "atlas_target: texture and mask differ");
    std::vector<double> x(texture.data.size());
    for (size_t i = 0; i < mask.texels(); ++i)
        for (int c = 0; c < 3; ++c) x[i * 3 + c] = mask.data[i] > 0.5 ? texture.data[i * 3 + c] : 0.0;
    return x;
}

Camera condition_camera(int k, const DataOptions& opts, int image_size) {
    const int n = std::max(1, opts.condition_views);
    double az = 20.0 + 360.0 * k / n;
    double el = (k % 2 == 0) ? 20.0 : -20.0;
    return orbit_camera(az, el, opts.camera_distance, opts.fov, image_size);
}

Camera render_camera(int k, const DataOptions& opts) {
    const int n = std::max(1, opts.render_views);
    static constexpr double elev[3] = {35.0, 5.0, -25.0};
    return orbit_camera(10.0 + 360.0 * k / n, elev[k % 3], opts.camera_distance, opts.fov, opts.render_size);
}

ConditionView make_condition_view(const Mesh& mesh, const GeometryMaps& geometry, const Grid& texture,
                                  const Camera& camera, const net::ImageEmbedder& embedder) {
    ConditionView cv;
    cv.camera = camera;
    cv.image = render_view(mesh, texture, camera).image;
    ProjectionResult pr = project_view_to_texture(mesh, geometry, cv.image, camera);
    cv.partial = pr.partial_texture.data;
    cv.visibility = pr.visibility_mask.data;
    cv.image_emb = embedder.embed(cv.image);
    return cv;
}

TrainingSample prepare_sample(const std::string& id, const Mesh& mesh, const Grid& texture,
                              const std::string& caption, const net::NetConfig& cfg, const DataOptions& opts,
                              const net::ImageEmbedder& image_embedder, const net::TextEmbedder& text_embedder) {
    const int R = opts.resolution;
    if (texture.height != R || texture.width != R || texture.channels != 3)
        throw PreconditionError("sample " + id + ": texture must be " + std::to_string(R) + "x" + std::to_string(R) +
                                " RGB");
    require(image_embedder.dim() == cfg.image_emb_dim && text_embedder.dim() == cfg.text_emb_dim,
            "prepare_sample: embedder sizes do not match the network");
    TrainingSample s;
    s.id = id;
    s.caption = caption;
    s.mesh = mesh;
    s.texture = texture;
    s.geo = net::SampleGeometry::build(mesh, R, cfg);
    const GeometryMaps& g0 = s.geo->levels[0];
    s.x0 = atlas_target(texture, g0.mask_map);
    for (int k = 0; k < opts.condition_views; ++k)
        s.condition_views.push_back(
            make_condition_view(mesh, g0, texture, condition_camera(k, opts, opts.condition_image_size), image_embedder));
    for (int k = 0; k < opts.render_views; ++k)
        s.render_views.push_back(make_render_target(mesh, g0, texture, render_camera(k, opts)));
    s.text_emb = text_embedder.embed(caption);
    return s;
}

// ---------------------------------------------------------------------------
// Loss

LossTerms loss_from_prediction(const Scheduler& s, const Tensor& v_pred, const std::vector<double>& x_t,
                               const std::vector<double>& x0, const std::vector<double>& eps, int t,
                               const std::vector<double>& mask, const std::vector<const RenderTarget*>& views,
                               const LossWeights& w, const PerceptualMetric& metric) {
    check_timestep(t);
    const int N = static_cast<int>(mask.size());
    require(v_pred.rows() == N && v_pred.cols() == 3 && x_t.size() == v_pred.size() && x0.size() == v_pred.size() &&
                eps.size() == v_pred.size(),
            "training_loss: shapes differ");
    require(w.lambda1 >= 0 && w.lambda2 >= 0, "training_loss: loss weights must be non-negative");
    if (views.empty() && w.lambda2 > 0) throw PreconditionError("training_loss: render loss needs at least one view");

    double count = 0;
    for (double m : mask) count += m > 0.5 ? 1.0 : 0.0;
    require(count > 0, "training_loss: empty atlas");
    auto row_w = std::make_shared<std::vector<double>>(N);
    auto row_mask = std::make_shared<std::vector<double>>(N);
    for (int i = 0; i < N; ++i) {
        (*row_mask)[i] = mask[i] > 0.5 ? 1.0 : 0.0;
        (*row_w)[i] = (*row_mask)[i] / (3.0 * count);
    }

    LossTerms out;
    Tensor err = sub(v_pred, Tensor::constant(N, 3, v_target(s, x0, eps, t)));
    out.diff = scale(weighted_row_sum(mul(err, err), row_w), s.lambda[t]);

    if (w.lambda2 > 0) {
        // x0_hat = sqrt(ab) x_t - sqrt(1 - ab) v
        Tensor x0_hat = mask_rows(sub(scale(Tensor::constant(N, 3, x_t), s.sqrt_ab(t)), scale(v_pred, s.sqrt_1mab(t))),
                           row_mask);
        Tensor acc;
        for (const RenderTarget* v : views) {
            Tensor term = metric(render(x0_hat, *v), v->image, v->size);
            acc = acc.defined() ? add(acc, term) : term;
        }
        out.render = scale(acc, 1.0 / static_cast<double>(views.size()));
    } else {
        out.render = Tensor::zeros(1, 1);
    }
    out.total = add(scale(out.diff, w.lambda1), scale(out.render, w.lambda2));
    return out;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
    if (steps < 1 || batch_size < 1) throw ValidationError("train: steps and batch_size must be >= 1");
    if (!(lr > 0) || min_lr_ratio < 0 || min_lr_ratio > 1 || warmup_steps < 0)
        throw ValidationError("train: invalid learning-rate schedule");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1 || weight_decay < 0 || adam_eps <= 0)
        throw ValidationError("train: invalid optimizer settings");
    if (drop_prob < 0 || drop_prob > 1) throw ValidationError("train: drop_prob must be in [0, 1]");
    if (weights.lambda1 < 0 || weights.lambda2 < 0) throw ValidationError("train: loss weights must be >= 0");
    if (render_views < 0) throw ValidationError("train: render_views must be >= 0");
    if (render_views == 0 && weights.lambda2 > 0) throw ValidationError("train: lambda2 > 0 needs render_views >= 1");
    if (log_every < 1 || checkpoint_every < 1) throw ValidationError("train: log/checkpoint intervals must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"steps", steps},
            {"batch_size", batch_size},
            {"lr", lr},
            {"min_lr_ratio", min_lr_ratio},
            {"warmup_steps", warmup_steps},
            {"beta1", beta1},
            {"beta2", beta2},
            {"weight_decay", weight_decay},
            {"adam_eps", adam_eps},
            {"grad_clip", grad_clip},
            {"drop_prob", drop_prob},
            {"lambda1", weights.lambda1},
            {"lambda2", weights.lambda2},
            {"render_views", render_views},
            {"seed", seed},
            {"log_every", log_every},
            {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.steps = j.value("steps", c.steps);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.lr = j.value("lr", c.lr);
        c.min_lr_ratio = j.value("min_lr_ratio", c.min_lr_ratio);
        c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.grad_clip = j.value("grad_clip", c.grad_clip);
        c.drop_prob = j.value("drop_prob", c.drop_prob);
        c.weights.lambda1 = j.value("lambda1", c.weights.lambda1);
        c.weights.lambda2 = j.value("lambda2", c.weights.lambda2);
        c.render_views = j.value("render_views", c.render_views);
        c.seed = j.value("seed", c.seed);
        c.log_every = j.value("log_every", c.log_every);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

double learning_rate(const TrainConfig& cfg, int step) {
    if (step < cfg.warmup_steps) return cfg.lr * (step + 1) / cfg.warmup_steps;
    const int span = std::max(1, cfg.steps - cfg.warmup_steps);
    const double p = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / span);
    return cfg.lr * (cfg.min_lr_ratio + (1.0 - cfg.min_lr_ratio) * 0.5 * (1.0 + std::cos(M_PI * p)));
}

AdamW::AdamW(const ParamStore& params) {
    for (const auto& [name, t] : params.params()) {
        m_.emplace_back(t.size(), 0.0);
        v_.emplace_back(t.size(), 0.0);
    }
}

void AdamW::step(ParamStore& params, double lr, const TrainConfig& cfg) {
    require(m_.size() == params.params().size(), "AdamW: optimizer state does not match parameters");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t_);
    size_t k = 0;
    for (const auto& [name, t] : params.params()) {
        Tensor p = t;
        auto& val = p.mutable_value();
        const auto& g = p.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (size_t i = 0; i < val.size(); ++i) {
            double gi = g.empty() ? 0.0 : g[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            double upd = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
            val[i] -= lr * (upd + cfg.weight_decay * val[i]);
        }
        ++k;
    }
}

nlohmann::json StepMetrics::to_json() const {
    return {{"step", step},         {"loss", loss}, {"l_diff", l_diff},       {"l_render", l_render},
            {"grad_norm", grad_norm}, {"lr", lr},   {"t", t},                 {"sample", sample_id},
            {"drop_image", image_dropped}, {"drop_text", text_dropped}};
}

Trainer::Trainer(net::TexGenNet& net, TrainConfig cfg, const Scheduler& sched,
                 std::shared_ptr<const PerceptualMetric> metric)
    : net_(net), cfg_(std::move(cfg)), sched_(sched), metric_(std::move(metric)), opt_(net.params()) {
    cfg_.validate();
    if (!metric_) metric_ = std::make_shared<PyramidL1>();
}

namespace {

Rng stream(uint64_t seed, RngPurpose p, int step, int item) {
    return Rng::derive(seed, {static_cast<uint64_t>(p), static_cast<uint64_t>(step), static_cast<uint64_t>(item)});
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

StepMetrics Trainer::step(const std::vector<TrainingSample>& data) {
    require(!data.empty(), "train_step: no training samples");
    const int s = step_;
    StepMetrics m;
    m.step = s + 1;
    m.lr = learning_rate(cfg_, s);
    net_.params().zero_grad();
    const double inv_b = 1.0 / cfg_.batch_size;

    for (int b = 0; b < cfg_.batch_size; ++b) {
        Rng pick = stream(cfg_.seed, RngPurpose::pick, s, b);
        const TrainingSample& smp = data[pick.uniform_int(0, static_cast<int64_t>(data.size()) - 1)];
        Rng trng = stream(cfg_.seed, RngPurpose::timestep, s, b);
        const int t = static_cast<int>(trng.uniform_int(0, kMaxTimestep));
        Rng nrng = stream(cfg_.seed, RngPurpose::noise, s, b);
        const auto& mask = smp.geo->levels[0].mask_map.data;
        std::vector<double> eps(smp.x0.size());
        for (size_t i = 0; i < eps.size(); ++i) {
            double z = nrng.normal();
            eps[i] = mask[i / 3] > 0.5 ? z : 0.0;
        }
        Rng drng = stream(cfg_.seed, RngPurpose::dropout, s, b);
        const bool drop_i = drng.uniform() < cfg_.drop_prob;
        const bool drop_t = drng.uniform() < cfg_.drop_prob;
        Rng vrng = stream(cfg_.seed, RngPurpose::views, s, b);
        require(!smp.condition_views.empty(), "train_step: sample has no conditioning views");
        const ConditionView& cv =
            smp.condition_views[vrng.uniform_int(0, static_cast<int64_t>(smp.condition_views.size()) - 1)];
        std::vector<int> order(smp.render_views.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        const int n_views = cfg_.weights.lambda2 > 0 ? std::min<int>(cfg_.render_views, order.size()) : 0;
        std::vector<const RenderTarget*> views;
        for (int i = 0; i < n_views; ++i) {
            int j = static_cast<int>(vrng.uniform_int(i, static_cast<int64_t>(order.size()) - 1));
            std::swap(order[i], order[j]);
            views.push_back(&smp.render_views[order[i]]);
        }

        const int N = static_cast<int>(mask.size());
        std::vector<double> x_t = add_noise(sched_, smp.x0, t, eps);
        Tensor y = net_.embed_condition({static_cast<double>(t), &cv.image_emb, &smp.text_emb, drop_i, drop_t});
        last_y_ = y.value();
        Tensor v = net_.forward(Tensor::constant(N, 3, x_t), *smp.geo, Tensor::constant(N, 3, cv.partial),
                                Tensor::constant(N, 1, cv.visibility), y);
        LossTerms lt =
            loss_from_prediction(sched_, v, x_t, smp.x0, eps, t, mask, views, cfg_.weights, *metric_);
        if (!std::isfinite(lt.total.item())) {
            std::ostringstream os;
            os << "non-finite loss at step " << m.step << " (t=" << t << ", sample " << smp.id
               << ", l_diff=" << lt.diff.item() << ", l_render=" << lt.render.item() << ")";
            throw NumericalError(os.str());
        }
        backward(scale(lt.total, inv_b));
        m.loss += lt.total.item() * inv_b;
        m.l_diff += lt.diff.item() * inv_b;
        m.l_render += lt.render.item() * inv_b;
        if (b == 0) {
            m.t = t;
            m.sample_id = smp.id;
            m.image_dropped = drop_i;
            m.text_dropped = drop_t;
        }
    }

    double sq = 0;
    for (const auto& [name, p] : net_.params().params())
        for (double g : p.grad()) sq += g * g;
    m.grad_norm = std::sqrt(sq);
    if (!std::isfinite(m.grad_norm)) throw NumericalError("non-finite gradient at step " + std::to_string(m.step));
    if (cfg_.grad_clip > 0 && m.grad_norm > cfg_.grad_clip) {
        const double f = cfg_.grad_clip / m.grad_norm;
        for (const auto& [name, p] : net_.params().params()) {
            Tensor q = p;
            for (double& g : q.mutable_grad()) g *= f;
        }
    }
    opt_.step(net_.params(), m.lr, cfg_);
    ++step_;
    return m;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'T', 'X', 'G', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_doubles(std::ofstream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& is, std::vector<double>& v, const std::filesystem::path& path) {
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!is) throw IoError("checkpoint truncated: " + path.string());
}

nlohmann::json read_header(std::ifstream& is, const std::filesystem::path& path) {
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    uint32_t version = 0;
    uint64_t len = 0;
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw MalformedInputError("not a checkpoint file: " + path.string());
    is.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kVersion) throw MalformedInputError("unsupported checkpoint version " + std::to_string(version));
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!is || len > (1u << 28)) throw MalformedInputError("corrupt checkpoint header: " + path.string());
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    if (!is) throw IoError("checkpoint truncated: " + path.string());
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedInputError(std::string("corrupt checkpoint header: ") + e.what());
    }
}

CheckpointInfo info_from_header(const nlohmann::json& h) {
    CheckpointInfo info;
    info.step = h.at("step").get<int>();
    info.net_config = net::NetConfig::from_json(h.at("net_config"));
    info.train_config = TrainConfig::from_json(h.at("train_config"));
    return info;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const net::TexGenNet& net, const AdamW* opt, int step,
                     const TrainConfig& train_cfg) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& [name, t] : net.params().params()) params.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    nlohmann::json h = {{"format", "texgen-checkpoint"},
                        {"net_config", net.config().to_json()},
                        {"net_hash", net.config().hash()},
                        {"step", step},
                        {"train_config", train_cfg.to_json()},
                        {"optimizer_steps", opt ? opt->steps_taken() : 0},
                        {"has_optimizer", opt != nullptr},
                        {"params", params}};
    const std::string text = h.dump();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write checkpoint: " + path.string());
        os.write(kMagic, 8);
        os.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
        uint64_t len = text.size();
        os.write(reinterpret_cast<const char*>(&len), sizeof(len));
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, t] : net.params().params()) write_doubles(os, t.value());
        if (opt) {
            auto& o = const_cast<AdamW&>(*opt);
            for (const auto& m : o.first_moment()) write_doubles(os, m);
            for (const auto& v : o.second_moment()) write_doubles(os, v);
        }
        if (!os) throw IoError("cannot write checkpoint: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    return info_from_header(read_header(is, path));
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, net::TexGenNet& net, AdamW* opt) {
    std::ifstream is(path, std::ios::binary);
    nlohmann::json h = read_header(is, path);
    if (h.at("net_hash").get<uint64_t>() != net.config().hash())
        throw ValidationError("checkpoint architecture does not match the configured network: " + path.string());
    const auto& plist = h.at("params");
    const auto& params = net.params().params();
    if (plist.size() != params.size()) throw ValidationError("checkpoint parameter count differs");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& e = plist[i];
        if (e.at("name") != params[i].first || e.at("rows") != params[i].second.rows() ||
            e.at("cols") != params[i].second.cols())
            throw ValidationError("checkpoint parameter mismatch at " + params[i].first);
    }
    for (const auto& [name, t] : params) {
        Tensor p = t;
        read_doubles(is, p.mutable_value(), path);
    }
    if (opt) {
        if (!h.at("has_optimizer").get<bool>()) throw ValidationError("checkpoint has no optimizer state");
        *opt = AdamW(net.params());
        for (auto& m : opt->first_moment()) read_doubles(is, m, path);
        for (auto& v : opt->second_moment()) read_doubles(is, v, path);
        opt->set_steps_taken(h.at("optimizer_steps").get<int>());
    }
    return info_from_header(h);
}

// ---------------------------------------------------------------------------
// Sampling

void SamplerConfig::validate() const {
    if (steps < 1 || steps > kMaxTimestep) throw ValidationError("sampler: steps must be in [1, 1000]");
    if (!(guidance >= 0)) throw ValidationError("sampler: guidance must be >= 0");
    if (eta < 0 || eta > 1) throw ValidationError("sampler: eta must be in [0, 1]");
}

nlohmann::json SamplerConfig::to_json() const {
    return {{"steps", steps}, {"guidance", guidance}, {"eta", eta}, {"seed", seed}, {"clamp_x0", clamp_x0},
            {"force_unconditional", force_unconditional}};
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j) {
    SamplerConfig c;
    try {
        c.steps = j.value("steps", c.steps);
        c.guidance = j.value("guidance", c.guidance);
        c.eta = j.value("eta", c.eta);
        c.seed = j.value("seed", c.seed);
        c.clamp_x0 = j.value("clamp_x0", c.clamp_x0);
        c.force_unconditional = j.value("force_unconditional", c.force_unconditional);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("sampler config: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<int> ddim_timesteps(int steps) {
    require(steps >= 1 && steps <= kMaxTimestep, "ddim: steps must be in [1, 1000]");
    std::vector<int> ts(steps);
    for (int i = 0; i < steps; ++i)
        ts[i] = static_cast<int>(std::lround(kMaxTimestep - static_cast<double>(i) * kMaxTimestep / steps));
    return ts;
}

std::vector<double> ddim_sample(const Scheduler& s, const VelocityFn& model, const std::vector<double>& mask,
                                const SamplerConfig& cfg, const StepHook& hook) {
    cfg.validate();
    const size_t n = mask.size() * 3;
    Rng rng = Rng::derive(cfg.seed, {0x646469ULL});
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();
    const std::vector<int> ts = ddim_timesteps(cfg.steps);
    std::vector<double> x0;
    for (int i = 0; i < cfg.steps; ++i) {
        const int t = ts[i];
        std::vector<double> v = model(x, t, true);
        if (cfg.guidance != 1.0 || cfg.force_unconditional) v = cfg_combine(model(x, t, false), v, cfg.guidance);
        if (v.size() != n) throw PreconditionError("ddim: model output has the wrong size");
        if (!all_finite(v)) throw NumericalError("ddim: non-finite model output at step " + std::to_string(i) + " (t=" + std::to_string(t) + ")");
        Decomposition d = from_v(s, x, v, t);
        if (cfg.clamp_x0)
            for (double& e : d.x0) e = std::clamp(e, -1.0, 1.0);
        x0 = std::move(d.x0);
        if (i + 1 == cfg.steps) break;
        const int tn = ts[i + 1];
        const double an = s.alpha_bar[tn], at = s.alpha_bar[t];
        double sigma = 0;
        if (cfg.eta > 0 && at < 1.0) sigma = cfg.eta * std::sqrt((1.0 - an) / (1.0 - at)) * std::sqrt(1.0 - at / an);
        const double dir = std::sqrt(std::max(0.0, 1.0 - an - sigma * sigma));
        for (size_t k = 0; k < n; ++k) {
            x[k] = std::sqrt(an) * x0[k] + dir * d.eps[k];
            if (sigma > 0) x[k] += sigma * rng.normal();
        }
        if (!all_finite(x)) throw NumericalError("ddim: non-finite state at step " + std::to_string(i) + " (t=" + std::to_string(t) + ")");
        if (hook) hook(x, tn, i);
    }
    for (size_t k = 0; k < n; ++k) x0[k] *= mask[k / 3] > 0.5 ? 1.0 : 0.0;
    return x0;
}

VelocityFn network_velocity(const net::TexGenNet& net, const net::SampleGeometry& geo, const Conditioning& cond) {
    const int N = geo.resolution * geo.resolution;
    require(cond.partial.size() == static_cast<size_t>(N) * 3 && cond.visibility.size() == static_cast<size_t>(N),
            "sample: conditioning maps do not match the geometry resolution");
    Tensor xi = Tensor::constant(N, 3, cond.partial);
    Tensor vis = Tensor::constant(N, 1, cond.visibility);
    auto image = cond.image_emb;
    auto text = cond.text_emb;
    return [&net, &geo, xi, vis, image, text, N](const std::vector<double>& x, int t, bool conditional) {
        net::ConditionInputs ci;
        ci.t = t;
        if (conditional) {
            ci.image_emb = image ? &*image : nullptr;
            ci.text_emb = text ? &*text : nullptr;
        }
        Tensor y = net.embed_condition(ci).detach();
        return net.forward(Tensor::constant(N, 3, x), geo, xi, vis, y).value();
    };
}

std::vector<double> sample_texture(const Scheduler& s, const net::TexGenNet& net, const net::SampleGeometry& geo,
                                   const Conditioning& cond, const SamplerConfig& cfg, const StepHook& hook) {
    return ddim_sample(s, network_velocity(net, geo, cond), geo.levels[0].mask_map.data, cfg, hook);
}

}  // namespace texgen::diffusion

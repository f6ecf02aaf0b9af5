#include "defectgen/eval/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>

#include "defectgen/core/blockfile.hpp"
#include "defectgen/core/errors.hpp"
#include "defectgen/core/log.hpp"
#include "defectgen/nn/optim.hpp"

namespace defectgen::eval {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Numerically stable BCE on a logit: softplus(z) - y*z.
double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - y * z;
}

void require_scorable(const Image& image, const DetectorConfig& cfg) {
  if (image.channels() != 1)
    throw ShapeError("detector expects single-channel images");
  if (image.rows() < cfg.window || image.cols() < cfg.window)
    throw ShapeError("image smaller than the detector window");
}

// Activations kept alive between forward and backward of one crop.
struct CropActs {
  Mat<float> cols1, a1, p1;
  Mat<float> cols2, a2, p2;
  Vec<float> f, h;
  double z = 0;
};

}  // namespace

Detector Detector::create(const DetectorConfig& cfg, Rng& rng) {
  if (cfg.window < 8 || cfg.window % 4 != 0)
    throw ParamError("detector window must be a multiple of 4 and >= 8");
  if (cfg.stride < 1) throw ParamError("detector stride must be positive");
  Detector d;
  d.cfg_ = cfg;
  d.conv1_.init(1, 8, 3, 1, rng);
  d.conv2_.init(8, 16, 3, 1, rng);
  const int q = cfg.window / 4;  // spatial side after two 2x2 pools
  d.fc1_.init(q * q * 16, 32, rng);
  d.fc2_.init(32, 1, rng);
  return d;
}

Mat<float> Detector::crop(const Image& image, int x0, int y0) const {
  const int w = cfg_.window;
  if (x0 < 0 || y0 < 0 || x0 + w > image.cols() || y0 + w > image.rows())
    throw ShapeError("detector crop out of bounds");
  Mat<float> x(static_cast<long>(w) * w, 1);
  const auto& plane = image.plane(0);
  for (int dx = 0; dx < w; ++dx)
    for (int dy = 0; dy < w; ++dy)
      x(static_cast<long>(dx) * w + dy, 0) = plane(y0 + dy, x0 + dx);
  return x;
}

namespace {

double forward_crop(const Detector& det, const nn::Conv2d<float>& conv1,
                    const nn::Conv2d<float>& conv2, const nn::Dense<float>& fc1,
                    const nn::Dense<float>& fc2, const Mat<float>& x, int w,
                    CropActs* acts) {
  CropActs local;
  CropActs& a = acts ? *acts : local;
  (void)det;
  a.a1 = conv1.forward(x, w, w, &a.cols1);
  Mat<float> s1 = nn::silu(a.a1);
  a.p1 = nn::avgpool2(s1, w, w);
  const int h2 = w / 2;
  a.a2 = conv2.forward(a.p1, h2, h2, &a.cols2);
  Mat<float> s2 = nn::silu(a.a2);
  a.p2 = nn::avgpool2(s2, h2, h2);
  a.f = Eigen::Map<const Vec<float>>(a.p2.data(), a.p2.size());
  a.h = fc1.forward(a.f);
  Vec<float> sh = nn::silu(a.h);
  a.z = static_cast<double>(fc2.forward(sh)(0));
  return a.z;
}

}  // namespace

double Detector::logit(const Mat<float>& x) const {
  return forward_crop(*this, conv1_, conv2_, fc1_, fc2_, x, cfg_.window,
                      nullptr);
}

double Detector::score_window(const Image& image, int x0, int y0) const {
  if (!calibrated_)
    throw ParamError("detector is uncalibrated; train it or load weights first");
  require_scorable(image, cfg_);
  return sigmoid(logit(crop(image, x0, y0)));
}

double Detector::train_crop(const Image& image, int x0, int y0, float label) {
  const int w = cfg_.window;
  Mat<float> x = crop(image, x0, y0);
  CropActs a;
  forward_crop(*this, conv1_, conv2_, fc1_, fc2_, x, w, &a);
  const double y = static_cast<double>(label);
  const double loss = bce_from_logit(a.z, y);
  const double dz = sigmoid(a.z) - y;

  Vec<float> sh = nn::silu(a.h);
  Vec<float> gz(1);
  gz(0) = static_cast<float>(dz);
  Vec<float> gsh = fc2_.backward(sh, gz);
  Vec<float> gh = nn::silu_backward(a.h, gsh);
  Vec<float> gf = fc1_.backward(a.f, gh);
  Mat<float> gp2 = Eigen::Map<const Mat<float>>(gf.data(), a.p2.rows(), a.p2.cols());
  const int h2 = w / 2;
  Mat<float> gs2 = nn::avgpool2_backward(gp2, h2, h2);
  Mat<float> ga2 = nn::silu_backward(a.a2, gs2);
  Mat<float> gp1 = conv2_.backward(a.cols2, ga2, h2, h2, /*want_input=*/true);
  Mat<float> gs1 = nn::avgpool2_backward(gp1, w, w);
  Mat<float> ga1 = nn::silu_backward(a.a1, gs1);
  conv1_.backward(a.cols1, ga1, w, w, /*want_input=*/false);
  return loss;
}

std::vector<nn::ParamView<float>> Detector::params() {
  return {
      {"det.conv1.W", &conv1_.W, &conv1_.gW}, {"det.conv1.b", &conv1_.b, &conv1_.gb},
      {"det.conv2.W", &conv2_.W, &conv2_.gW}, {"det.conv2.b", &conv2_.b, &conv2_.gb},
      {"det.fc1.W", &fc1_.W, &fc1_.gW},       {"det.fc1.b", &fc1_.b, &fc1_.gb},
      {"det.fc2.W", &fc2_.W, &fc2_.gW},       {"det.fc2.b", &fc2_.b, &fc2_.gb},
  };
}

void Detector::zero_grads() {
  for (auto& p : params()) p.g->setZero();
}

std::vector<Detection> Detector::detect(const Image& image,
                                        const std::string& image_id) const {
  if (!calibrated_)
    throw ParamError("detector is uncalibrated; train it or load weights first");
  require_scorable(image, cfg_);
  const int w = cfg_.window;
  const int W = static_cast<int>(image.cols());
  const int H = static_cast<int>(image.rows());

  // Window origins at every stride step plus a flush final position, so the
  // image edge is always covered.
  auto origins = [&](int extent) {
    std::vector<int> v;
    for (int o = 0; o + w <= extent; o += cfg_.stride) v.push_back(o);
    if (v.empty() || v.back() != extent - w) v.push_back(extent - w);
    return v;
  };

  struct Candidate {
    Box box;
    double score;
  };
  std::vector<Candidate> cand;
  for (int x0 : origins(W))
    for (int y0 : origins(H)) {
      double s = sigmoid(logit(crop(image, x0, y0)));
      if (s < cfg_.emit_floor) continue;
      cand.push_back({Box{static_cast<double>(x0), static_cast<double>(y0),
                          static_cast<double>(x0 + w), static_cast<double>(y0 + w)},
                      s});
    }

  // Union-find over window overlap.
  std::vector<std::size_t> parent(cand.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  auto overlaps = [](const Box& a, const Box& b) {
    return std::min(a.x_max, b.x_max) > std::max(a.x_min, b.x_min) &&
           std::min(a.y_max, b.y_max) > std::max(a.y_min, b.y_min);
  };
  for (std::size_t i = 0; i < cand.size(); ++i)
    for (std::size_t j = i + 1; j < cand.size(); ++j)
      if (overlaps(cand[i].box, cand[j].box)) parent[find(i)] = find(j);

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cand.size(); ++i) groups[find(i)].push_back(i);

  std::vector<Detection> out;
  for (auto& [root, members] : groups) {
    double cmax = 0;
    for (std::size_t i : members) cmax = std::max(cmax, cand[i].score);
    // The union box covers the strong part of the group; weak fringe windows
    // vote for confidence but not extent.
    Box u{1e30, 1e30, -1e30, -1e30};
    for (std::size_t i : members) {
      if (cand[i].score < 0.5 * cmax) continue;
      u.x_min = std::min(u.x_min, cand[i].box.x_min);
      u.y_min = std::min(u.y_min, cand[i].box.y_min);
      u.x_max = std::max(u.x_max, cand[i].box.x_max);
      u.y_max = std::max(u.y_max, cand[i].box.y_max);
    }
    out.push_back(Detection{u, cmax, image_id});
  }
  std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.box.x_min != b.box.x_min) return a.box.x_min < b.box.x_min;
    return a.box.y_min < b.box.y_min;
  });
  return out;
}

void Detector::save(const std::filesystem::path& path) const {
  if (!calibrated_) throw ParamError("refusing to save an uncalibrated detector");
  nlohmann::json manifest;
  manifest["kind"] = "detector";
  manifest["config"] = {{"window", cfg_.window},
                        {"stride", cfg_.stride},
                        {"emit_floor", cfg_.emit_floor},
                        {"train_steps", cfg_.train_steps},
                        {"lr", cfg_.lr},
                        {"jitter", cfg_.jitter}};
  std::vector<NamedBlock> blocks;
  Detector& self = const_cast<Detector&>(*this);
  for (auto& p : self.params()) {
    NamedBlock b;
    b.name = p.name;
    b.rows = p.w->rows();
    b.cols = p.w->cols();
    b.data.resize(static_cast<std::size_t>(p.w->size()));
    std::memcpy(b.data.data(), p.w->data(), b.data.size() * sizeof(float));
    blocks.push_back(std::move(b));
  }
  write_block_file(path, std::move(manifest), blocks);
}

Detector Detector::load(const std::filesystem::path& path) {
  BlockFile bf = read_block_file(path);
  try {
    if (bf.manifest.at("kind").get<std::string>() != "detector")
      throw FormatError("detector file: kind is not 'detector'");
    const auto& jc = bf.manifest.at("config");
    DetectorConfig cfg;
    cfg.window = jc.at("window").get<int>();
    cfg.stride = jc.at("stride").get<int>();
    cfg.emit_floor = jc.at("emit_floor").get<double>();
    cfg.train_steps = jc.value("train_steps", cfg.train_steps);
    cfg.lr = jc.value("lr", cfg.lr);
    cfg.jitter = jc.value("jitter", cfg.jitter);
    Rng init_rng(0);
    Detector d = Detector::create(cfg, init_rng);
    for (auto& p : d.params()) {
      const NamedBlock& b = bf.find(p.name);
      if (b.rows != p.w->rows() || b.cols != p.w->cols())
        throw FormatError("detector file: shape mismatch for block '" + p.name +
                          "'");
      std::memcpy(p.w->data(), b.data.data(), b.data.size() * sizeof(float));
    }
    d.calibrated_ = true;
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("detector manifest: ") + e.what());
  }
}

// Grants the training entry points access to the calibration flag.
struct DetectorTrainer {
  static void mark_calibrated(Detector& d) { d.calibrated_ = true; }
};

namespace {

// Shared crop-sampling loop for fresh training and fine-tuning. Draw order
// per step: branch coin, item index, then the branch-specific coordinates.
std::vector<double> run_training(Detector& det,
                                 const std::vector<DetectorTrainItem>& items,
                                 int steps, std::uint64_t seed) {
  const DetectorConfig& cfg = det.config();
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    if (it.image.empty() || it.image.channels() != 1)
      throw ShapeError("detector training items must be single-channel images");
    if (it.image.rows() < cfg.window || it.image.cols() < cfg.window)
      throw ShapeError("detector training image smaller than the window");
    const bool has_defect = it.mask.size() > 0 && mask_count(it.mask) > 0;
    if (has_defect) {
      if (it.mask.rows() != it.image.rows() || it.mask.cols() != it.image.cols())
        throw ShapeError("detector training mask does not match its image");
      pos.push_back(i);
    } else {
      neg.push_back(i);
    }
  }
  if (pos.empty()) throw DataError("detector training needs defect samples");
  if (neg.empty()) throw DataError("detector training needs defect-free samples");

  Rng rng(seed);
  nn::Adam<float> opt(det.params(), cfg.lr);

  auto clamp_origin = [&](long v, long limit) {
    return std::max<long>(0, std::min<long>(v, limit - cfg.window));
  };

  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    const bool positive = rng.uniform() < 0.5;
    double loss = 0;
    if (positive) {
      const auto& it = items[pos[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<long>(pos.size()) - 1))]];
      PixelBox bb = derive_bbox(it.mask);
      long cx = (bb.x_min + bb.x_max) / 2 + rng.uniform_int(-cfg.jitter, cfg.jitter);
      long cy = (bb.y_min + bb.y_max) / 2 + rng.uniform_int(-cfg.jitter, cfg.jitter);
      long x0 = clamp_origin(cx - cfg.window / 2, it.image.cols());
      long y0 = clamp_origin(cy - cfg.window / 2, it.image.rows());
      loss = det.train_crop(it.image, static_cast<int>(x0), static_cast<int>(y0),
                            1.0f);
    } else {
      // Hard negatives: sometimes take a zero-overlap crop from a defect
      // image; fall back to a clean image when rejection sampling fails.
      bool hard = rng.uniform() < 0.3;
      long x0 = -1, y0 = -1;
      const DetectorTrainItem* src = nullptr;
      if (hard) {
        const auto& it = items[pos[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<long>(pos.size()) - 1))]];
        for (int attempt = 0; attempt < 8; ++attempt) {
          long tx = rng.uniform_int(0, it.image.cols() - cfg.window);
          long ty = rng.uniform_int(0, it.image.rows() - cfg.window);
          if (it.mask.block(ty, tx, cfg.window, cfg.window)
                  .template cast<long>()
                  .sum() == 0) {
            src = &it;
            x0 = tx;
            y0 = ty;
            break;
          }
        }
      }
      if (!src) {
        const auto& it = items[neg[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<long>(neg.size()) - 1))]];
        src = &it;
        x0 = rng.uniform_int(0, it.image.cols() - cfg.window);
        y0 = rng.uniform_int(0, it.image.rows() - cfg.window);
      }
      loss = det.train_crop(src->image, static_cast<int>(x0),
                            static_cast<int>(y0), 0.0f);
    }
    if (!std::isfinite(loss))
      throw NumericError("non-finite detector loss at step " +
                         std::to_string(step));
    opt.step();
    trace.push_back(loss);
  }
  return trace;
}

}  // namespace

DetectorTrainResult train_detector(const std::vector<DetectorTrainItem>& items,
                                   const DetectorConfig& cfg,
                                   std::uint64_t seed) {
  Rng rng(seed);
  DetectorTrainResult res;
  res.detector = Detector::create(cfg, rng);
  res.loss_trace =
      run_training(res.detector, items, cfg.train_steps, derive_seed(seed, 1));
  // Mark usable only after the full schedule ran.
  DetectorTrainer::mark_calibrated(res.detector);
  return res;
}

DetectorTrainResult finetune_detector(const Detector& init,
                                      const std::vector<DetectorTrainItem>& items,
                                      int steps, std::uint64_t seed) {
  if (!init.calibrated())
    throw ParamError("fine-tuning requires a calibrated detector");
  if (steps < 0) throw ParamError("negative fine-tune step count");
  DetectorTrainResult res;
  res.detector = init;
  res.loss_trace = run_training(res.detector, items, steps, seed);
  return res;
}

}  // namespace defectgen::eval

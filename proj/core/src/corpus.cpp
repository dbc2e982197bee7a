#include "avf/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "avf/io.hpp"

namespace avf {

namespace fs = std::filesystem;

constexpr const char* kGeneratorVersion = "avforge-corpus-1";

std::string to_string(Label l) { return l == Label::real ? "real" : "fake"; }

std::string to_string(Family f) {
  switch (f) {
    case Family::none: return "none";
    case Family::desync: return "desync";
    case Family::swap: return "swap";
    case Family::seam: return "seam";
    case Family::frozen: return "frozen";
  }
  return "?";
}

Label label_from_string(const std::string& s) {
  if (s == "real") return Label::real;
  if (s == "fake") return Label::fake;
  throw std::invalid_argument("unknown label: " + s);
}

Family family_from_string(const std::string& s) {
  for (Family f : {Family::none, Family::desync, Family::swap, Family::seam,
                   Family::frozen})
    if (to_string(f) == s) return f;
  throw std::invalid_argument("unknown manipulation family: " + s);
}

int SplitCounts::get(const std::string& split) const {
  if (split == "train") return train;
  if (split == "val") return val;
  if (split == "test") return test;
  throw std::invalid_argument("unknown split: " + split);
}

// ---------------- generator ----------------

namespace {

struct Appearance {
  double skin[3];
  double bg, bg_grad;
  double mouth_col;
  double face_rx, face_ry;
  double eye_dx, eye_dy, eye_r;
};

Appearance identity_appearance(std::uint64_t seed, int identity_id) {
  Rng rng(Rng::mix(seed ^ 0xA99EA9ULL, static_cast<std::uint64_t>(identity_id)));
  Appearance a;
  double base = rng.uniform(0.55, 0.9);
  for (int c = 0; c < 3; ++c) a.skin[c] = std::clamp(base + rng.uniform(-0.08, 0.08), 0.3, 0.98);
  a.bg = rng.uniform(0.08, 0.35);
  a.bg_grad = rng.uniform(-0.1, 0.1);
  a.mouth_col = rng.uniform(0.04, 0.18);
  a.face_rx = rng.uniform(0.30, 0.36);
  a.face_ry = rng.uniform(0.40, 0.46);
  a.eye_dx = rng.uniform(0.11, 0.15);
  a.eye_dy = rng.uniform(0.10, 0.15);
  a.eye_r = rng.uniform(0.025, 0.04);
  return a;
}

struct Trajectory {
  double f1, p1, f2, p2;    // aperture harmonics (Hz, phase)
  double fd, pdx, pdy;      // head drift
  bool constant = false;
  double const_value = 0.5;

  double aperture(double t_frames, double frame_rate) const {
    if (constant) return const_value;
    double t = t_frames / frame_rate;
    double a = 0.5 + 0.32 * std::sin(2 * M_PI * f1 * t + p1) +
               0.18 * std::sin(2 * M_PI * f2 * t + p2);
    return std::clamp(a, 0.0, 1.0);
  }
  double drift_x(double t_frames, double frame_rate) const {
    if (constant) return 0.0;
    return 0.012 * std::sin(2 * M_PI * fd * (t_frames / frame_rate) + pdx);
  }
  double drift_y(double t_frames, double frame_rate) const {
    if (constant) return 0.0;
    return 0.012 * std::sin(2 * M_PI * fd * (t_frames / frame_rate) + pdy);
  }
};

Trajectory sample_trajectory(Rng& rng, const GenOptions& opts) {
  Trajectory tr;
  tr.f1 = rng.uniform(1.5, 3.0);
  tr.p1 = rng.uniform(0, 2 * M_PI);
  tr.f2 = rng.uniform(4.0, 7.0);
  tr.p2 = rng.uniform(0, 2 * M_PI);
  tr.fd = rng.uniform(0.4, 1.0);
  tr.pdx = rng.uniform(0, 2 * M_PI);
  tr.pdy = rng.uniform(0, 2 * M_PI);
  tr.constant = opts.constant_aperture;
  tr.const_value = opts.aperture_value;
  return tr;
}

void fill_ellipse(VideoClip& clip, int t, double cx, double cy, double rx, double ry,
                  const double col[3], double shade = 0.0) {
  const int S = clip.H;
  int y0 = std::max(0, static_cast<int>((cy - ry) * S));
  int y1 = std::min(S - 1, static_cast<int>((cy + ry) * S) + 1);
  int x0 = std::max(0, static_cast<int>((cx - rx) * S));
  int x1 = std::min(S - 1, static_cast<int>((cx + rx) * S) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      double u = (x / static_cast<double>(S) - cx) / rx;
      double v = (y / static_cast<double>(S) - cy) / ry;
      double r2 = u * u + v * v;
      if (r2 <= 1.0) {
        double k = 1.0 - shade * r2;
        for (int c = 0; c < 3; ++c)
          clip.at(t, y, x, c) = std::clamp(col[c] * k, 0.0, 1.0);
      }
    }
}

}  // namespace

std::array<int, 4> mouth_rect(int H, int W) {
  return {static_cast<int>(0.58 * H), static_cast<int>(0.88 * H),
          static_cast<int>(0.30 * W), static_cast<int>(0.70 * W)};
}

std::pair<VideoClip, Spectrogram> generate_real(std::uint64_t seed, int identity_id,
                                                int duration_frames, int frame_size,
                                                double noise_amp,
                                                const GenOptions& opts) {
  if (duration_frames < 25)
    throw std::invalid_argument("generate_real: duration_frames must be >= 25, got " +
                                std::to_string(duration_frames));
  const int S = frame_size, T = duration_frames;
  Appearance ap = identity_appearance(seed, identity_id);
  Rng rng(Rng::mix(Rng::mix(seed, static_cast<std::uint64_t>(identity_id)),
                   static_cast<std::uint64_t>(duration_frames)));
  Trajectory tr = sample_trajectory(rng, opts);

  VideoClip clip;
  clip.T = T;
  clip.H = clip.W = S;
  clip.data.assign(static_cast<std::size_t>(T) * S * S * 3, 0.0);
  const double fr = clip.frame_rate;
  for (int t = 0; t < T; ++t) {
    double dx = tr.drift_x(t, fr), dy = tr.drift_y(t, fr);
    double cx = 0.5 + dx, cy = 0.48 + dy;
    // background gradient
    for (int y = 0; y < S; ++y) {
      double bgv = std::clamp(ap.bg + ap.bg_grad * (y / static_cast<double>(S)), 0.0, 1.0);
      for (int x = 0; x < S; ++x)
        for (int c = 0; c < 3; ++c) clip.at(t, y, x, c) = bgv;
    }
    fill_ellipse(clip, t, cx, cy, ap.face_rx, ap.face_ry, ap.skin, 0.25);
    double eye_col[3] = {0.08, 0.08, 0.1};
    fill_ellipse(clip, t, cx - ap.eye_dx, cy - ap.eye_dy, ap.eye_r, ap.eye_r, eye_col);
    fill_ellipse(clip, t, cx + ap.eye_dx, cy - ap.eye_dy, ap.eye_r, ap.eye_r, eye_col);
    double a = tr.aperture(t, fr);
    double mouth_col[3] = {ap.mouth_col, ap.mouth_col * 0.8, ap.mouth_col * 0.8};
    fill_ellipse(clip, t, cx, cy + 0.25 + dy * 0.2, 0.12, 0.025 + 0.095 * a, mouth_col);
  }

  Spectrogram spec;
  spec.T = 4 * T;
  spec.L = 80;
  spec.data.assign(static_cast<std::size_t>(spec.T) * spec.L, 0.0);
  // identity timbre: a fixed high-band bump
  Rng trng(Rng::mix(seed ^ 0x7134B3ULL, static_cast<std::uint64_t>(identity_id)));
  double timbre_bin = trng.uniform(58, 74);
  double timbre_amp = trng.uniform(0.15, 0.35);
  for (int k = 0; k < spec.T; ++k) {
    double a = tr.aperture(k / 4.0, fr);
    double center = 8.0 + 48.0 * a;
    for (int l = 0; l < spec.L; ++l) {
      double e = 0.1 + 0.8 * std::exp(-0.5 * std::pow((l - center) / 6.0, 2)) +
                 timbre_amp * std::exp(-0.5 * std::pow((l - timbre_bin) / 3.0, 2));
      spec.at(k, l) = e + rng.normal(0.0, noise_amp);
    }
  }
  return {std::move(clip), std::move(spec)};
}

// ---------------- manipulations ----------------

namespace {

void copy_rect(VideoClip& dst, int t_dst, const VideoClip& src, int t_src,
               const std::array<int, 4>& r) {
  for (int y = r[0]; y < r[1]; ++y)
    for (int x = r[2]; x < r[3]; ++x)
      for (int c = 0; c < 3; ++c) dst.at(t_dst, y, x, c) = src.at(t_src, y, x, c);
}

VideoClip fake_frozen(const VideoClip& real) {
  VideoClip out = real;
  auto r = mouth_rect(real.H, real.W);
  for (int t = 1; t < real.T; ++t) copy_rect(out, t, real, 0, r);
  return out;
}

VideoClip fake_desync(const VideoClip& real, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(real.T));
  std::iota(perm.begin(), perm.end(), 0);
  do {
    rng.shuffle(perm.begin(), perm.end());
  } while (std::is_sorted(perm.begin(), perm.end()));
  VideoClip out = real;
  auto r = mouth_rect(real.H, real.W);
  for (int t = 0; t < real.T; ++t) copy_rect(out, t, real, perm[static_cast<std::size_t>(t)], r);
  return out;
}

VideoClip fake_swap(const VideoClip& real, Rng& rng) {
  // Composite a donor identity's appearance onto the source motion: remap
  // colours inside the face region toward the donor palette.
  Appearance donor = identity_appearance(rng.next(), static_cast<int>(rng.next() % 100000));
  // mean colour inside the face mask, over the first frame
  double mean[3] = {0, 0, 0};
  int count = 0;
  const int S = real.H;
  auto face_r = [&](int y, int x) {
    double u = (x / static_cast<double>(S) - 0.5) / 0.33;
    double v = (y / static_cast<double>(S) - 0.48) / 0.43;
    return std::sqrt(u * u + v * v);
  };
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      if (face_r(y, x) <= 0.9) {
        for (int c = 0; c < 3; ++c) mean[c] += real.at(0, y, x, c);
        ++count;
      }
  for (double& m : mean) m = std::max(m / std::max(count, 1), 1e-3);
  VideoClip out = real;
  for (int t = 0; t < real.T; ++t)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        double r = face_r(y, x);
        if (r > 1.05) continue;
        double w = r <= 0.9 ? 1.0 : (1.05 - r) / 0.15;  // soft blend boundary
        for (int c = 0; c < 3; ++c) {
          double remapped = std::clamp(real.at(t, y, x, c) * donor.skin[c] / mean[c], 0.0, 1.0);
          out.at(t, y, x, c) = (1 - w) * real.at(t, y, x, c) + w * remapped;
        }
      }
  return out;
}

VideoClip fake_seam(const VideoClip& real, Rng& rng) {
  // Blending-boundary artifact: a static additive ring around the face.
  // The ring's mean brightness is removed again as a uniform offset, so
  // the artifact is local contrast only and frame luminance is unchanged.
  const int S = real.H;
  double delta = rng.uniform(0.06, 0.12);
  double r_mid = rng.uniform(0.82, 0.88);
  std::vector<double> add(static_cast<std::size_t>(S) * S, 0.0);
  double total = 0.0;
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      double u = (x / static_cast<double>(S) - 0.5) / 0.33;
      double v = (y / static_cast<double>(S) - 0.48) / 0.43;
      double r = std::sqrt(u * u + v * v);
      double d = std::abs(r - r_mid);
      if (d < 0.07) {
        add[static_cast<std::size_t>(y) * S + x] = delta * (1.0 - d / 0.07);
        total += add[static_cast<std::size_t>(y) * S + x];
      }
    }
  const double offset = total / (static_cast<double>(S) * S);
  VideoClip out = real;
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      double a = add[static_cast<std::size_t>(y) * S + x] - offset;
      for (int t = 0; t < real.T; ++t)
        for (int c = 0; c < 3; ++c)
          out.at(t, y, x, c) = std::clamp(out.at(t, y, x, c) + a, 0.0, 1.0);
    }
  return out;
}

}  // namespace

VideoClip generate_fake(const VideoClip& real, Family family, std::uint64_t seed) {
  Rng rng(Rng::mix(seed, 0xFA4EULL));
  switch (family) {
    case Family::frozen: return fake_frozen(real);
    case Family::desync: return fake_desync(real, rng);
    case Family::swap: return fake_swap(real, rng);
    case Family::seam: return fake_seam(real, rng);
    case Family::none:
      throw std::invalid_argument("generate_fake: 'none' is not a manipulation");
  }
  throw std::invalid_argument("generate_fake: unknown family");
}

// ---------------- cross-modal probes ----------------

std::vector<double> estimate_aperture_series(const VideoClip& clip) {
  auto r = mouth_rect(clip.H, clip.W);
  std::vector<double> out(static_cast<std::size_t>(clip.T));
  for (int t = 0; t < clip.T; ++t) {
    double s = 0;
    int n = 0;
    for (int y = r[0]; y < r[1]; ++y)
      for (int x = r[2]; x < r[3]; ++x, ++n) s += clip.at(t, y, x, 0);
    out[static_cast<std::size_t>(t)] = 1.0 - s / std::max(n, 1);
  }
  return out;
}

std::vector<double> spectrogram_centroid_series(const Spectrogram& spec) {
  std::vector<double> fine(static_cast<std::size_t>(spec.T));
  for (int t = 0; t < spec.T; ++t) {
    double num = 0, den = 0;
    for (int l = 0; l < spec.L; ++l) {
      double e = std::max(spec.at(t, l) - 0.1, 0.0);  // strip the floor
      num += l * e;
      den += e;
    }
    fine[static_cast<std::size_t>(t)] = den > 0 ? num / den : 0.0;
  }
  // downsample 4x to the video frame rate
  std::vector<double> out(fine.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (fine[4 * i] + fine[4 * i + 1] + fine[4 * i + 2] + fine[4 * i + 3]) / 4.0;
  return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("pearson: size mismatch");
  const double n = static_cast<double>(a.size());
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double num = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  double den = std::sqrt(va * vb);
  return den > 1e-12 ? num / den : 0.0;
}

// ---------------- serialisation ----------------

void save_clip(const fs::path& path, const VideoClip& clip) {
  save_array_f32(path, {clip.T, clip.H, clip.W, 3}, clip.data);
}

VideoClip load_clip(const fs::path& path) {
  Shape s;
  VideoClip clip;
  load_array_f32(path, s, clip.data);
  if (s.size() != 4 || s[3] != 3)
    throw std::runtime_error("not a video clip file: " + path.string());
  clip.T = s[0];
  clip.H = s[1];
  clip.W = s[2];
  return clip;
}

void save_spectrogram(const fs::path& path, const Spectrogram& spec) {
  save_array_f32(path, {spec.T, spec.L}, spec.data);
}

Spectrogram load_spectrogram(const fs::path& path) {
  Shape s;
  Spectrogram spec;
  load_array_f32(path, s, spec.data);
  if (s.size() != 2) throw std::runtime_error("not a spectrogram file: " + path.string());
  spec.T = s[0];
  spec.L = s[1];
  return spec;
}

json CorpusConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["frame_size"] = frame_size;
  j["duration_frames"] = duration_frames;
  j["noise_amp"] = noise_amp;
  j["real_counts"] = {{"train", real_counts.train}, {"val", real_counts.val},
                      {"test", real_counts.test}};
  j["fake_per_family"] = {{"train", fake_per_family.train},
                          {"val", fake_per_family.val},
                          {"test", fake_per_family.test}};
  json fams = json::array();
  for (Family f : families) fams.push_back(to_string(f));
  j["families"] = fams;
  j["leave_out_family"] = leave_out_family;
  return j;
}

CorpusConfig CorpusConfig::from_json(const json& j) {
  static const std::set<std::string> known = {
      "seed", "frame_size", "duration_frames", "noise_amp", "real_counts",
      "fake_per_family", "families", "leave_out_family"};
  for (auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument("corpus config: unknown key '" + k + "'");
  CorpusConfig c;
  c.seed = j.value("seed", c.seed);
  c.frame_size = j.value("frame_size", c.frame_size);
  c.duration_frames = j.value("duration_frames", c.duration_frames);
  c.noise_amp = j.value("noise_amp", c.noise_amp);
  auto counts = [](const json& cj, SplitCounts def) {
    SplitCounts s = def;
    s.train = cj.value("train", s.train);
    s.val = cj.value("val", s.val);
    s.test = cj.value("test", s.test);
    return s;
  };
  if (j.contains("real_counts")) c.real_counts = counts(j["real_counts"], c.real_counts);
  if (j.contains("fake_per_family"))
    c.fake_per_family = counts(j["fake_per_family"], c.fake_per_family);
  if (j.contains("families")) {
    c.families.clear();
    for (const auto& f : j["families"]) c.families.push_back(family_from_string(f));
  }
  c.leave_out_family = j.value("leave_out_family", c.leave_out_family);
  return c;
}

namespace {
json record_to_json(const SampleRecord& r) {
  json j;
  j["sample_id"] = r.sample_id;
  j["label"] = to_string(r.label);
  j["manipulation_family"] = to_string(r.family);
  j["identity_id"] = r.identity_id;
  j["split"] = r.split;
  j["clip_path"] = r.clip_path;
  j["spec_path"] = r.spec_path;
  j["clip_checksum"] = r.clip_checksum;
  j["spec_checksum"] = r.spec_checksum;
  j["source_id"] = r.source_id;
  return j;
}

SampleRecord record_from_json(const json& j) {
  SampleRecord r;
  r.sample_id = j.at("sample_id");
  r.label = label_from_string(j.at("label"));
  r.family = family_from_string(j.at("manipulation_family"));
  r.identity_id = j.at("identity_id");
  r.split = j.at("split");
  r.clip_path = j.at("clip_path");
  r.spec_path = j.at("spec_path");
  r.clip_checksum = j.at("clip_checksum");
  r.spec_checksum = j.at("spec_checksum");
  r.source_id = j.value("source_id", "");
  return r;
}
}  // namespace

json CorpusManifest::to_json() const {
  json j;
  j["generator_version"] = generator_version;
  j["generator_seed"] = generator_seed;
  j["config"] = config_json;
  json recs = json::array();
  for (const auto& r : records) recs.push_back(record_to_json(r));
  j["records"] = recs;
  return j;
}

CorpusManifest CorpusManifest::from_json(const json& j) {
  CorpusManifest m;
  m.generator_version = j.at("generator_version");
  m.generator_seed = j.at("generator_seed");
  m.config_json = j.value("config", json::object());
  for (const auto& rj : j.at("records")) m.records.push_back(record_from_json(rj));
  return m;
}

const SampleRecord* CorpusManifest::find(const std::string& sample_id) const {
  for (const auto& r : records)
    if (r.sample_id == sample_id) return &r;
  return nullptr;
}

std::vector<const SampleRecord*> CorpusManifest::split_records(
    const std::string& split) const {
  std::vector<const SampleRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

void CorpusManifest::validate() const {
  std::set<std::string> ids;
  std::map<int, std::set<std::string>> identity_splits;
  std::map<std::string, std::pair<int, int>> split_class_counts;  // real, fake
  for (const auto& r : records) {
    if (!ids.insert(r.sample_id).second)
      throw std::runtime_error("duplicate sample_id: " + r.sample_id);
    if ((r.label == Label::real) != (r.family == Family::none))
      throw std::runtime_error("label/family mismatch on " + r.sample_id);
    identity_splits[r.identity_id].insert(r.split);
    auto& cc = split_class_counts[r.split];
    (r.label == Label::real ? cc.first : cc.second)++;
    if (r.label == Label::fake) {
      const SampleRecord* src = find(r.source_id);
      if (!src || src->spec_path != r.spec_path)
        throw std::runtime_error("fake " + r.sample_id +
                                 " does not share its source real's spectrogram");
    }
  }
  for (const auto& [identity, splits] : identity_splits)
    if (splits.size() > 1)
      throw std::runtime_error("identity " + std::to_string(identity) +
                               " appears in multiple splits");
  for (const auto& [split, cc] : split_class_counts)
    if (cc.first == 0 || cc.second == 0)
      throw std::runtime_error("split '" + split +
                               "' lacks a real or a fake sample");
}

CorpusManifest build_corpus(const CorpusConfig& cfg, const fs::path& out_dir) {
  if (!cfg.leave_out_family.empty())
    family_from_string(cfg.leave_out_family);  // validate early
  CorpusManifest m;
  m.generator_seed = cfg.seed;
  m.generator_version = kGeneratorVersion;
  m.config_json = cfg.to_json();

  int next_identity = 0;
  char buf[64];
  for (const std::string split : {"train", "val", "test"}) {
    fs::create_directories(out_dir / split);
    const int n_real = cfg.real_counts.get(split);
    std::vector<std::pair<std::string, int>> reals;  // id, identity
    for (int i = 0; i < n_real; ++i) {
      int identity = next_identity++;
      std::snprintf(buf, sizeof(buf), "%s_real_%04d", split.c_str(), i);
      std::string sid = buf;
      auto [clip, spec] = generate_real(cfg.seed, identity, cfg.duration_frames,
                                        cfg.frame_size, cfg.noise_amp);
      SampleRecord r;
      r.sample_id = sid;
      r.label = Label::real;
      r.family = Family::none;
      r.identity_id = identity;
      r.split = split;
      r.clip_path = split + "/" + sid + ".vid";
      r.spec_path = split + "/" + sid + ".spec";
      save_clip(out_dir / r.clip_path, clip);
      save_spectrogram(out_dir / r.spec_path, spec);
      r.clip_checksum = file_checksum(out_dir / r.clip_path);
      r.spec_checksum = file_checksum(out_dir / r.spec_path);
      m.records.push_back(r);
      reals.emplace_back(sid, identity);
    }
    for (Family fam : cfg.families) {
      bool held_out = to_string(fam) == cfg.leave_out_family;
      if (held_out && split != "test") continue;
      const int n_fake = cfg.fake_per_family.get(split);
      for (int i = 0; i < n_fake; ++i) {
        std::snprintf(buf, sizeof(buf), "%s_fake_%s_%04d", split.c_str(),
                      to_string(fam).c_str(), i);
        std::string sid = buf;
        std::uint64_t fseed =
            Rng::mix(cfg.seed, fnv1a64(sid.data(), sid.size()));
        const auto& [src_id, src_identity] =
            reals[static_cast<std::size_t>(Rng(fseed).uniform_int(
                0, static_cast<int>(reals.size()) - 1))];
        const SampleRecord* src = m.find(src_id);
        VideoClip real_clip = load_clip(out_dir / src->clip_path);
        VideoClip fake_clip = generate_fake(real_clip, fam, fseed);
        SampleRecord r;
        r.sample_id = sid;
        r.label = Label::fake;
        r.family = fam;
        r.identity_id = src_identity;
        r.split = split;
        r.clip_path = split + "/" + sid + ".vid";
        r.spec_path = src->spec_path;  // manipulations are visual-only
        r.source_id = src_id;
        save_clip(out_dir / r.clip_path, fake_clip);
        r.clip_checksum = file_checksum(out_dir / r.clip_path);
        r.spec_checksum = src->spec_checksum;
        m.records.push_back(r);
      }
    }
  }
  m.validate();
  save_manifest(m, out_dir);
  return m;
}

void save_manifest(const CorpusManifest& m, const fs::path& corpus_dir) {
  write_text_file(corpus_dir / "manifest.json", m.to_json().dump(2) + "\n");
}

CorpusManifest load_manifest(const fs::path& corpus_dir) {
  auto j = json::parse(read_text_file(corpus_dir / "manifest.json"));
  return CorpusManifest::from_json(j);
}

std::tuple<VideoClip, Spectrogram, Label> load_sample(const fs::path& corpus_dir,
                                                      const CorpusManifest& manifest,
                                                      const std::string& sample_id) {
  const SampleRecord* r = manifest.find(sample_id);
  if (!r) throw std::runtime_error("unknown sample_id: " + sample_id);
  if (file_checksum(corpus_dir / r->clip_path) != r->clip_checksum)
    throw std::runtime_error("clip checksum mismatch for " + sample_id);
  if (file_checksum(corpus_dir / r->spec_path) != r->spec_checksum)
    throw std::runtime_error("spectrogram checksum mismatch for " + sample_id);
  return {load_clip(corpus_dir / r->clip_path),
          load_spectrogram(corpus_dir / r->spec_path), r->label};
}

}  // namespace avf

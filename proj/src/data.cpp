#include "fasam/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "fasam/error.hpp"
#include "fasam/rng.hpp"

namespace fs = std::filesystem;

namespace fasam {

void DomainStyle::validate() const {
  if (!(gamma > 0.0)) throw ConfigError("DomainStyle: gamma must be > 0");
  if (noise_std < 0.0 || blur_sigma < 0.0 || texture_amp < 0.0)
    throw ConfigError("DomainStyle: amplitudes must be >= 0");
}

const DomainDecl& DatasetManifest::source_domain() const {
  for (const DomainDecl& d : domains)
    if (d.role == DomainRole::kSource) return d;
  throw ConfigError("manifest: no source domain declared");
}

std::vector<std::string> DatasetManifest::target_names() const {
  std::vector<std::string> out;
  for (const DomainDecl& d : domains)
    if (d.role == DomainRole::kTarget) out.push_back(d.name);
  return out;
}

void DatasetManifest::validate() const {
  int sources = 0;
  for (const DomainDecl& d : domains) sources += d.role == DomainRole::kSource;
  if (sources != 1)
    throw ConfigError("manifest: exactly one source domain required, found " +
                      std::to_string(sources));
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw ConfigError("manifest: train_fraction must be in (0,1]");
}

void DatasetManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("manifest: cannot write " + path);
  out << "root " << (root.empty() ? "." : root) << "\n";
  for (const DomainDecl& d : domains)
    out << "domain " << d.name << " "
        << (d.role == DomainRole::kSource ? "source" : "target") << "\n";
  out << "train_fraction " << train_fraction << "\n";
  out << "split_seed " << split_seed << "\n";
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest: cannot read " + path);
  DatasetManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "root") {
      ls >> m.root;
      if (m.root == ".") m.root.clear();
    } else if (key == "domain") {
      DomainDecl d;
      std::string role;
      ls >> d.name >> role;
      if (role == "source")
        d.role = DomainRole::kSource;
      else if (role == "target")
        d.role = DomainRole::kTarget;
      else
        throw IngestionError("manifest: unknown domain role '" + role + "'");
      m.domains.push_back(d);
    } else if (key == "train_fraction") {
      ls >> m.train_fraction;
    } else if (key == "split_seed") {
      ls >> m.split_seed;
    } else {
      throw IngestionError("manifest: unknown key '" + key + "'");
    }
  }
  // A relative root resolves against the manifest's directory.
  if (!m.root.empty() && fs::path(m.root).is_relative())
    m.root = (fs::path(path).parent_path() / m.root).string();
  else if (m.root.empty())
    m.root = fs::path(path).parent_path().string();
  m.validate();
  return m;
}

std::vector<std::size_t> Dataset::by_domain(const std::string& domain) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].domain == domain) out.push_back(i);
  return out;
}

// ------------------------------------------------------ synthetic domains

namespace {

/// Coarse random grid upsampled bilinearly; values in [-1, 1].
Image low_frequency_field(int h, int w, RngStream& rng) {
  constexpr int kGrid = 6;
  Image coarse(kGrid, kGrid);
  for (double& x : coarse.v) x = 2.0 * rng.uniform01() - 1.0;
  return resize_bilinear(coarse, h, w);
}

struct ShapeSpec {
  double cy, cx;         // center in pixels
  double ry, rx;         // radii in pixels
  double angle;          // rotation, radians
  double harm_amp[3];    // radial harmonics (blob only)
  double harm_phase[3];
};

ShapeSpec sample_shape(ShapeFamily family, int h, int w, RngStream& rng) {
  ShapeSpec s{};
  const double size = std::min(h, w);
  s.cy = (0.35 + 0.3 * rng.uniform01()) * h;
  s.cx = (0.35 + 0.3 * rng.uniform01()) * w;
  const double base = (0.14 + 0.14 * rng.uniform01()) * size;
  switch (family) {
    case ShapeFamily::kDisk:
      s.ry = s.rx = std::max(5.0, base);
      break;
    case ShapeFamily::kEllipse:
      s.ry = std::max(5.0, base * (0.6 + 0.5 * rng.uniform01()));
      s.rx = std::max(5.0, base * (0.6 + 0.5 * rng.uniform01()));
      s.angle = rng.uniform01() * M_PI;
      break;
    case ShapeFamily::kBlob:
      s.ry = s.rx = std::max(6.0, base);
      for (int k = 0; k < 3; ++k) {
        // Bounded harmonics keep the radius positive and the shape
        // star-shaped about the center, hence one connected component.
        s.harm_amp[k] = (0.30 / (k + 1)) * rng.uniform01();
        s.harm_phase[k] = rng.uniform01() * 2.0 * M_PI;
      }
      break;
  }
  return s;
}

/// Signed inside test; > 0 inside. For blobs the radius is modulated by
/// low-order harmonics of the polar angle.
double inside_value(const ShapeSpec& s, ShapeFamily family, double y, double x) {
  const double dy = y - s.cy, dx = x - s.cx;
  if (family == ShapeFamily::kBlob) {
    const double r = std::sqrt(dy * dy + dx * dx);
    const double theta = std::atan2(dy, dx);
    double rim = 1.0;
    for (int k = 0; k < 3; ++k)
      rim += s.harm_amp[k] * std::sin((k + 1) * theta + s.harm_phase[k]);
    return s.ry * rim - r;
  }
  const double ca = std::cos(s.angle), sa = std::sin(s.angle);
  const double u = (dx * ca + dy * sa) / s.rx;
  const double v = (-dx * sa + dy * ca) / s.ry;
  return 1.0 - std::sqrt(u * u + v * v);
}

}  // namespace

std::vector<DomainSample> generate_synthetic_domain(int n, const DomainStyle& style,
                                                    ShapeFamily family, int height,
                                                    int width, std::uint64_t seed,
                                                    const std::string& domain_name) {
  if (n < 1) throw ConfigError("generate_synthetic_domain: n must be >= 1");
  style.validate();

  constexpr double kBackground = 0.3;
  constexpr double kForeground = 0.75;

  std::vector<DomainSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int idx = 0; idx < n; ++idx) {
    RngStream rng(mix_seed(seed, static_cast<std::uint64_t>(idx)));
    const ShapeSpec spec = sample_shape(family, height, width, rng);

    DomainSample sample;
    sample.domain = domain_name;
    {
      std::ostringstream id;
      id << domain_name << "_" << std::setw(4) << std::setfill('0') << idx;
      sample.id = id.str();
    }

    // Clean rendering with 2x2 supersampled coverage for soft edges.
    Image clean(height, width);
    sample.mask = Mask(height, width);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        int hits = 0;
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx)
            hits += inside_value(spec, family, r + 0.25 + 0.5 * sy,
                                 c + 0.25 + 0.5 * sx) > 0.0;
        const double coverage = hits / 4.0;
        clean.at(r, c) = kBackground + (kForeground - kBackground) * coverage;
        sample.mask.at(r, c) = coverage >= 0.5 ? 1 : 0;
      }
    }

    Image img = clean;
    if (style.texture_amp > 0.0) {
      const Image field = low_frequency_field(height, width, rng);
      for (std::size_t i = 0; i < img.v.size(); ++i)
        img.v[i] += style.texture_amp * field.v[i];
    }
    if (style.intensity_offset != 0.0)
      for (double& x : img.v) x += style.intensity_offset;
    if (style.gamma != 1.0)
      for (double& x : img.v) x = std::pow(std::max(x, 0.0), style.gamma);
    if (style.blur_sigma > 0.0) img = gaussian_blur(img, style.blur_sigma);
    if (style.noise_std > 0.0)
      for (double& x : img.v) x += style.noise_std * rng.normal();
    clamp01(img);
    sample.image = std::move(img);
    out.push_back(std::move(sample));
  }
  return out;
}

// ------------------------------------------------------------- ingestion

Dataset load_dataset(const DatasetManifest& manifest) {
  manifest.validate();
  Dataset ds;
  std::vector<std::string> problems;
  for (const DomainDecl& d : manifest.domains) {
    const fs::path img_dir = fs::path(manifest.root) / d.name / "images";
    const fs::path mask_dir = fs::path(manifest.root) / d.name / "masks";
    if (!fs::is_directory(img_dir)) {
      problems.push_back("missing directory " + img_dir.string());
      continue;
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(img_dir))
      if (entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
      problems.push_back("no images in " + img_dir.string());
    for (const fs::path& f : files) {
      const fs::path mask_path = mask_dir / f.filename();
      if (!fs::exists(mask_path)) {
        problems.push_back("missing mask " + mask_path.string());
        continue;
      }
      DomainSample s;
      s.domain = d.name;
      s.id = f.stem().string();
      s.image = load_image_png(f.string());
      s.mask = load_mask_png(mask_path.string());
      if (s.image.h != s.mask.h || s.image.w != s.mask.w) {
        problems.push_back("size mismatch for " + f.string());
        continue;
      }
      ds.samples.push_back(std::move(s));
    }
  }
  if (!problems.empty()) {
    std::string msg = "dataset ingestion failed:";
    for (const std::string& p : problems) msg += "\n  " + p;
    throw IngestionError(msg);
  }
  return ds;
}

Split split_source(const std::vector<std::size_t>& indices, double train_fraction,
                   std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw ConfigError("split_source: train_fraction must be in (0,1]");
  std::vector<std::size_t> shuffled = indices;
  RngStream rng(mix_seed(seed, 0xda7a5e7));
  // Fisher-Yates with the documented uniform_int contract.
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)));
    std::swap(shuffled[i - 1], shuffled[j]);
  }
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(shuffled.size())));
  Split split;
  split.train.assign(shuffled.begin(), shuffled.begin() + static_cast<long>(n_train));
  split.test.assign(shuffled.begin() + static_cast<long>(n_train), shuffled.end());
  if (split.test.empty())
    std::cerr << "warning: train_fraction " << train_fraction
              << " leaves an empty test split\n";
  return split;
}

ShapeFamily shape_family_from_string(const std::string& s) {
  if (s == "disk") return ShapeFamily::kDisk;
  if (s == "ellipse") return ShapeFamily::kEllipse;
  if (s == "blob") return ShapeFamily::kBlob;
  throw ConfigError("unknown shape family '" + s + "'");
}

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::kDisk: return "disk";
    case ShapeFamily::kEllipse: return "ellipse";
    case ShapeFamily::kBlob: return "blob";
  }
  return "disk";
}

}  // namespace fasam

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fasam/image.hpp"
#include "fasam/prompt.hpp"

namespace fasam {

/// Rendering parameters of one imaging site; fixed per domain.
struct DomainStyle {
  double intensity_offset = 0.0;
  double gamma = 1.0;        // > 0
  double noise_std = 0.0;    // >= 0
  double blur_sigma = 0.0;   // >= 0
  double texture_amp = 0.0;  // >= 0

  void validate() const;
};

enum class ShapeFamily { kDisk, kEllipse, kBlob };

struct DomainSample {
  Image image;
  Mask mask;
  std::string domain;
  std::string id;  // file stem, unique within the domain
};

enum class DomainRole { kSource, kTarget };

struct DomainDecl {
  std::string name;
  DomainRole role = DomainRole::kTarget;
};

/// Directory-backed dataset description. Sample records are discovered from
/// the `<root>/<domain>/images|masks/*.png` layout; the manifest file
/// declares roles and split parameters.
struct DatasetManifest {
  std::string root;
  std::vector<DomainDecl> domains;
  double train_fraction = 0.9;
  std::uint64_t split_seed = 0;

  const DomainDecl& source_domain() const;
  std::vector<std::string> target_names() const;
  void validate() const;

  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);
};

struct Dataset {
  std::vector<DomainSample> samples;
  std::vector<std::size_t> by_domain(const std::string& domain) const;
};

/// One foreground shape per sample rendered under the domain style.
/// Deterministic per (seed, index); styles apply in the order
/// texture -> offset -> gamma -> blur -> noise, clipping only at the end.
std::vector<DomainSample> generate_synthetic_domain(int n, const DomainStyle& style,
                                                    ShapeFamily family, int height,
                                                    int width, std::uint64_t seed,
                                                    const std::string& domain_name);

/// Loads every sample referenced by the manifest; missing or misaligned
/// files produce an ingestion error listing all offending records.
Dataset load_dataset(const DatasetManifest& manifest);

/// Deterministic shuffled split of the given indices.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
Split split_source(const std::vector<std::size_t>& indices, double train_fraction,
                   std::uint64_t seed);

ShapeFamily shape_family_from_string(const std::string& s);
std::string to_string(ShapeFamily f);

}  // namespace fasam

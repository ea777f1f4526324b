#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slicerec/volume.hpp"

namespace slicerec {

// On-disk scan container (.volr): a little-endian binary header
//   magic "VOLR" | u32 version | u32 n_slices | u32 height | u32 width |
//   12 reserved zero bytes
// followed by n_slices*height*width u16 pixels, slice-major then row-major.
// A u16 value q encodes the intensity q / 65535.
inline constexpr std::uint32_t kVolrVersion = 1;

void save_volume(const Volume& v, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

// One dataset row. `path` is relative to the manifest's directory.
struct ManifestEntry {
  std::string path;
  std::string subject_id;
  std::string scan_id;
  Cdr cdr = Cdr::zero;
  Split split = Split::train;
  int n_slices = 0;
  int height = 0;
  int width = 0;
  std::vector<int> exclude_slices;  // low-quality slices to drop
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  // Unique scan ids; every subject confined to a single split.
  void validate() const;

  std::vector<const ManifestEntry*> split_entries(Split s) const;
};

// Tab-separated manifest with a "volr-manifest\t1" first line.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

// Load the volume behind a manifest entry, checking the file header
// against the dimensions the manifest promises and applying metadata
// and slice exclusions.
Volume load_manifest_volume(const std::filesystem::path& manifest_dir,
                            const ManifestEntry& entry);

}  // namespace slicerec

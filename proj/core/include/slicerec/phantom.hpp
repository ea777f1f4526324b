#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "slicerec/volume.hpp"
#include "slicerec/volume_io.hpp"

namespace slicerec {

// Synthetic head phantoms. A scan is a stack of nested-ellipse "brains"
// whose structure sizes follow a smooth spheroid profile along the slice
// axis, so adjacent slices are strongly predictable from one another.
// Anomalous scans perturb structure scale, grow an inner cavity, and warp
// the through-plane profile, which breaks exactly that predictability.
struct PhantomSpec {
  std::uint64_t seed = 0;

  int n_train_healthy = 8;
  int n_val_healthy = 4;
  int n_val_anomalous = 4;
  int n_test_healthy = 4;
  int n_test_anomalous = 4;

  int slices_per_volume = 12;
  int height = 64;
  int width = 64;

  double severity = 1.0;     // top-of-scale anomaly strength, in (0,1]
  double noise_sigma = 0.01; // additive Gaussian pixel noise, both classes

  void validate() const;
};

// Deterministic rendering of a single scan. severity 0 is the healthy
// geometry; anomalous generation routes through the same function.
Volume render_phantom(std::uint64_t volume_seed, const PhantomSpec& spec,
                      double severity, Cdr cdr, Split split,
                      const std::string& subject_id,
                      const std::string& scan_id);

struct PhantomDataset {
  DatasetManifest manifest;       // paths filled as vols/<scan_id>.volr
  std::vector<Volume> volumes;    // same order as manifest.entries
};

// Build the whole dataset in memory. Healthy scans land in train /
// validation / test per the requested counts; anomalous scans are split
// between validation and test and cycle through CDR stages 0.5, 1, 2
// with severity scaled to the stage.
PhantomDataset generate_phantoms(const PhantomSpec& spec);

// Render to out_dir/vols/*.volr plus out_dir/manifest.tsv.
DatasetManifest write_phantoms(const PhantomSpec& spec,
                               const std::filesystem::path& out_dir);

}  // namespace slicerec

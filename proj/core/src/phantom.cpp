#include "slicerec/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "slicerec/rng.hpp"

namespace slicerec {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Ellipse {
  double cy, cx, ry, rx;

  // Normalized radius of a pixel: < 1 inside.
  double radius(double y, double x) const {
    const double dy = (y - cy) / ry;
    const double dx = (x - cx) / rx;
    return std::sqrt(dy * dy + dx * dx);
  }
};

// Per-volume anatomy: a skull ellipse enclosing tissue, one dark central
// ventricle and a pair of bright nuclei. Sizes follow a spheroid profile
// along the slice axis.
struct Anatomy {
  Ellipse head;
  double tissue = 0.45;
  double cortex = 0.56;
  double skull = 0.92;
  double vent_ry = 0, vent_rx = 0;     // ventricle radii at profile 1
  double nuc_r = 0;                    // nucleus radius at profile 1
  double nuc_off = 0;                  // nucleus x offset from center
  double z_curve = 0.55;               // spheroid eccentricity
  // anomaly terms
  double vent_grow = 1.0;              // cavity growth factor
  double nuc_shrink = 1.0;             // structure shrink factor
  double warp = 1.0;                   // z-profile exponent
  double wobble_amp = 0.0;             // high-frequency z modulation
  double wobble_freq = 2.0;
  double wobble_phase = 0.0;
};

Anatomy make_anatomy(Rng& rng, const PhantomSpec& spec, double severity) {
  const double h = spec.height;
  const double w = spec.width;
  Anatomy a;
  a.head.cy = h * (0.5 + 0.02 * (rng.uniform() - 0.5));
  a.head.cx = w * (0.5 + 0.02 * (rng.uniform() - 0.5));
  a.head.ry = h * (0.40 + 0.03 * rng.uniform());
  a.head.rx = w * (0.37 + 0.03 * rng.uniform());
  a.tissue = 0.42 + 0.06 * rng.uniform();
  a.cortex = a.tissue + 0.10 + 0.04 * rng.uniform();
  a.vent_ry = 0.30 + 0.05 * rng.uniform();  // fraction of head ry
  a.vent_rx = 0.20 + 0.04 * rng.uniform();
  a.nuc_r = 0.145 + 0.02 * rng.uniform();
  a.nuc_off = 0.40 + 0.04 * rng.uniform();
  a.z_curve = 0.50 + 0.10 * rng.uniform();

  // Anomaly: shrink the nuclei, grow the ventricle, and bend the
  // through-plane evolution law that healthy training data follows.
  a.vent_grow = 1.0 + 0.9 * severity;
  a.nuc_shrink = 1.0 - 0.45 * severity;
  a.warp = 1.0 + 0.9 * severity;
  a.wobble_amp = 0.22 * severity;
  a.wobble_freq = rng.uniform() < 0.5 ? 2.0 : 3.0;
  a.wobble_phase = 2.0 * kPi * rng.uniform();
  return a;
}

Slice render_slice(const Anatomy& a, const PhantomSpec& spec, int t, Rng& rng) {
  const int s = spec.slices_per_volume;
  const double zeta = s > 1 ? (t - (s - 1) / 2.0) / ((s - 1) / 2.0) : 0.0;
  const double profile = std::sqrt(std::max(0.08, 1.0 - zeta * zeta * a.z_curve));
  // Healthy volumes: structures track `profile` exactly, so the next slice
  // is a smooth function of the previous ones. Anomalous volumes follow a
  // warped and wobbled profile instead.
  const double q = std::pow(profile, a.warp) *
                   (1.0 + a.wobble_amp *
                              std::sin(2.0 * kPi * a.wobble_freq * t / s +
                                       a.wobble_phase));
  const double head_scale = 0.82 + 0.18 * profile;

  Ellipse head{a.head.cy, a.head.cx, a.head.ry * head_scale,
               a.head.rx * head_scale};
  Ellipse vent{a.head.cy, a.head.cx,
               std::max(1.5, a.head.ry * a.vent_ry * q * a.vent_grow),
               std::max(1.5, a.head.rx * a.vent_rx * q * a.vent_grow)};
  const double nr =
      std::max(1.2, a.head.rx * a.nuc_r * q * a.nuc_shrink);
  Ellipse nuc_l{a.head.cy, a.head.cx - a.head.rx * a.nuc_off * head_scale, nr,
                nr};
  Ellipse nuc_r{a.head.cy, a.head.cx + a.head.rx * a.nuc_off * head_scale, nr,
                nr};

  Slice out(spec.height, spec.width, 0.0);
  for (int r = 0; r < spec.height; ++r)
    for (int c = 0; c < spec.width; ++c) {
      const double y = r + 0.5;
      const double x = c + 0.5;
      const double e = head.radius(y, x);
      double v = 0.0;
      if (e <= 1.0) {
        if (e >= 0.90) {
          v = a.skull;                       // skull ring
        } else if (e >= 0.74) {
          v = a.cortex;                      // cortical band
        } else {
          v = a.tissue;                      // interior tissue
          if (nuc_l.radius(y, x) < 1.0 || nuc_r.radius(y, x) < 1.0) v = 0.72;
          if (vent.radius(y, x) < 1.0) v = 0.10;  // ventricle wins
        }
      }
      if (spec.noise_sigma > 0) v += rng.normal(0.0, spec.noise_sigma);
      out.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  return out;
}

double stage_severity(const PhantomSpec& spec, Cdr cdr) {
  switch (cdr) {
    case Cdr::zero: return 0.0;
    case Cdr::half: return 0.4 * spec.severity;
    case Cdr::one: return 0.7 * spec.severity;
    case Cdr::two: return 1.0 * spec.severity;
  }
  throw DataError("bad cdr enum");
}

}  // namespace

void PhantomSpec::validate() const {
  if (slices_per_volume < 6)
    throw ConfigError("phantom needs at least 6 slices per volume for windowing");
  if (height < 24 || width < 24)
    throw ConfigError("phantom slices must be at least 24x24");
  if (height > 4096 || width > 4096 || slices_per_volume > 4096)
    throw ConfigError("phantom dimensions implausibly large");
  if (n_train_healthy < 0 || n_val_healthy < 0 || n_val_anomalous < 0 ||
      n_test_healthy < 0 || n_test_anomalous < 0)
    throw ConfigError("phantom counts must be >= 0");
  if (n_train_healthy + n_val_healthy + n_val_anomalous + n_test_healthy +
          n_test_anomalous <
      1)
    throw ConfigError("phantom dataset is empty");
  if (!(severity > 0.0 && severity <= 1.0))
    throw ConfigError("phantom severity must be in (0, 1]");
  if (noise_sigma < 0.0 || noise_sigma > 0.2)
    throw ConfigError("phantom noise_sigma must be in [0, 0.2]");
}

Volume render_phantom(std::uint64_t volume_seed, const PhantomSpec& spec,
                      double severity, Cdr cdr, Split split,
                      const std::string& subject_id,
                      const std::string& scan_id) {
  Rng rng(volume_seed);
  const Anatomy a = make_anatomy(rng, spec, severity);
  Volume v;
  v.subject_id = subject_id;
  v.scan_id = scan_id;
  v.cdr = cdr;
  v.split = split;
  v.slices.reserve(static_cast<std::size_t>(spec.slices_per_volume));
  for (int t = 0; t < spec.slices_per_volume; ++t)
    v.slices.push_back(render_slice(a, spec, t, rng));
  return v;
}

PhantomDataset generate_phantoms(const PhantomSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  PhantomDataset ds;
  int volume_index = 0;
  int healthy_count = 0;
  int anomalous_count = 0;

  auto emit = [&](Split split, Cdr cdr) {
    const bool healthy = cdr == Cdr::zero;
    const std::string subject =
        (healthy ? "H" : "A") +
        [&] {
          char buf[8];
          std::snprintf(buf, sizeof buf, "%03d",
                        healthy ? healthy_count++ : anomalous_count++);
          return std::string(buf);
        }();
    const std::string scan = subject + "_s0";
    const double severity = stage_severity(spec, cdr);
    Volume v = render_phantom(root.fork(static_cast<std::uint64_t>(volume_index)).seed(),
                              spec, severity, cdr, split, subject, scan);
    ++volume_index;
    ManifestEntry e;
    e.path = "vols/" + scan + ".volr";
    e.subject_id = subject;
    e.scan_id = scan;
    e.cdr = cdr;
    e.split = split;
    e.n_slices = spec.slices_per_volume;
    e.height = spec.height;
    e.width = spec.width;
    ds.manifest.entries.push_back(std::move(e));
    ds.volumes.push_back(std::move(v));
  };

  static constexpr Cdr kStages[3] = {Cdr::half, Cdr::one, Cdr::two};
  for (int i = 0; i < spec.n_train_healthy; ++i) emit(Split::train, Cdr::zero);
  for (int i = 0; i < spec.n_val_healthy; ++i) emit(Split::validation, Cdr::zero);
  for (int i = 0; i < spec.n_val_anomalous; ++i)
    emit(Split::validation, kStages[i % 3]);
  for (int i = 0; i < spec.n_test_healthy; ++i) emit(Split::test, Cdr::zero);
  for (int i = 0; i < spec.n_test_anomalous; ++i)
    emit(Split::test, kStages[i % 3]);

  ds.manifest.validate();
  return ds;
}

DatasetManifest write_phantoms(const PhantomSpec& spec,
                               const std::filesystem::path& out_dir) {
  PhantomDataset ds = generate_phantoms(spec);
  std::filesystem::create_directories(out_dir / "vols");
  for (std::size_t i = 0; i < ds.volumes.size(); ++i)
    save_volume(ds.volumes[i], out_dir / ds.manifest.entries[i].path);
  save_manifest(ds.manifest, out_dir / "manifest.tsv");
  return ds.manifest;
}

}  // namespace slicerec

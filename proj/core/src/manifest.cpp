#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "slicerec/volume_io.hpp"

namespace slicerec {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("manifest: bad " + what + " '" + s + "'");
  }
}

}  // namespace

void DatasetManifest::validate() const {
  if (entries.empty()) throw DataError("manifest has no entries");
  std::set<std::string> scan_ids;
  std::map<std::string, Split> subject_split;
  for (const ManifestEntry& e : entries) {
    if (e.path.empty() || e.subject_id.empty() || e.scan_id.empty())
      throw DataError("manifest entry with empty path or id");
    if (!scan_ids.insert(e.scan_id).second)
      throw DataError("duplicate scan id '" + e.scan_id + "' in manifest");
    auto [it, fresh] = subject_split.emplace(e.subject_id, e.split);
    if (!fresh && it->second != e.split)
      throw DataError("subject '" + e.subject_id +
                      "' appears in more than one split");
    if (e.n_slices <= 0 || e.height <= 0 || e.width <= 0)
      throw DataError("manifest entry '" + e.scan_id +
                      "' has nonpositive dimensions");
    for (int idx : e.exclude_slices)
      if (idx < 0 || idx >= e.n_slices)
        throw DataError("manifest entry '" + e.scan_id +
                        "' excludes out-of-range slice " + std::to_string(idx));
  }
}

std::vector<const ManifestEntry*> DatasetManifest::split_entries(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const ManifestEntry& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("cannot open manifest '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line))
    throw FormatError("manifest '" + path.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "volr-manifest\t1")
    throw FormatError("manifest '" + path.string() +
                      "': bad signature line '" + line + "'");

  DatasetManifest m;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_tabs(line);
    if (f.size() != 9)
      throw FormatError("manifest '" + path.string() + "' line " +
                        std::to_string(lineno) + ": expected 9 fields, got " +
                        std::to_string(f.size()));
    ManifestEntry e;
    e.path = f[0];
    e.subject_id = f[1];
    e.scan_id = f[2];
    try {
      e.cdr = cdr_parse(f[3]);
      e.split = split_parse(f[4]);
    } catch (const DataError& err) {
      throw FormatError("manifest '" + path.string() + "' line " +
                        std::to_string(lineno) + ": " + err.what());
    }
    e.n_slices = parse_int(f[5], "slice count");
    e.height = parse_int(f[6], "height");
    e.width = parse_int(f[7], "width");
    if (f[8] != "-") {
      std::stringstream ss(f[8]);
      std::string tok;
      while (std::getline(ss, tok, ','))
        e.exclude_slices.push_back(parse_int(tok, "exclusion index"));
    }
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  m.validate();
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot open manifest '" + path.string() + "' for writing");
  out << "volr-manifest\t1\n";
  out << "# path\tsubject_id\tscan_id\tcdr\tsplit\tn_slices\theight\twidth\texclude\n";
  for (const ManifestEntry& e : m.entries) {
    out << e.path << '\t' << e.subject_id << '\t' << e.scan_id << '\t'
        << cdr_str(e.cdr) << '\t' << split_str(e.split) << '\t' << e.n_slices
        << '\t' << e.height << '\t' << e.width << '\t';
    if (e.exclude_slices.empty()) {
      out << '-';
    } else {
      for (std::size_t i = 0; i < e.exclude_slices.size(); ++i)
        out << (i ? "," : "") << e.exclude_slices[i];
    }
    out << '\n';
  }
  if (!out) throw FormatError("short write to manifest '" + path.string() + "'");
}

Volume load_manifest_volume(const std::filesystem::path& manifest_dir,
                            const ManifestEntry& entry) {
  Volume v = load_volume(manifest_dir / entry.path);
  if (v.n_slices() != entry.n_slices || v.height() != entry.height ||
      v.width() != entry.width)
    throw FormatError("volume '" + entry.path + "': file is " +
                      std::to_string(v.n_slices()) + "x" +
                      std::to_string(v.height()) + "x" +
                      std::to_string(v.width()) + " but manifest says " +
                      std::to_string(entry.n_slices) + "x" +
                      std::to_string(entry.height) + "x" +
                      std::to_string(entry.width));
  v.subject_id = entry.subject_id;
  v.scan_id = entry.scan_id;
  v.cdr = entry.cdr;
  v.split = entry.split;
  if (!entry.exclude_slices.empty()) {
    std::vector<int> keep;
    std::set<int> drop(entry.exclude_slices.begin(), entry.exclude_slices.end());
    Volume pruned = v;
    pruned.slices.clear();
    for (int i = 0; i < v.n_slices(); ++i)
      if (!drop.count(i)) pruned.slices.push_back(v.slices[i]);
    if (pruned.slices.empty())
      throw DataError("volume '" + entry.scan_id + "': all slices excluded");
    return pruned;
  }
  return v;
}

}  // namespace slicerec

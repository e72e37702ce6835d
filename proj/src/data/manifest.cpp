// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "data/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "core/error.hpp"
#include "core/log.hpp"
#include "text/vocab.hpp"

namespace cl4ac::data {

std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& origin) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t line = 1;
  std::size_t i = 0;
  if (text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;  // UTF-8 BOM
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    // Skip blank lines.
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"') {
      if (field_started && !field.empty()) {
        throw FormatError(origin + ":" + std::to_string(line) + ": stray quote inside an unquoted field");
      }
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      // handled by the '\n'
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw FormatError(origin + ": unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

std::vector<std::string> expected_header() {
  std::vector<std::string> h = {"file_name"};
  for (std::size_t k = 1; k <= kCaptionsPerClip; ++k) h.push_back("caption_" + std::to_string(k));
  return h;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& csv_path, const std::filesystem::path& audio_root,
                              const std::string& split) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw InputError("cannot open manifest " + csv_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string origin = csv_path.string();
  const auto records = parse_csv(ss.str(), origin);
  const auto header = expected_header();
  if (records.empty() || records[0] != header) {
    throw FormatError(origin + ": expected header columns " + join(header, ",") +
                      (records.empty() ? " but the file is empty" : " but found " + join(records[0], ",")));
  }
  DatasetManifest m;
  m.split = split;
  std::set<std::string> names;
  std::vector<std::string> missing;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string where = origin + " record " + std::to_string(r + 1);
    if (rec.size() != header.size()) {
      throw FormatError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(rec.size()));
    }
    ManifestRow row;
    row.file_name = rec[0];
    if (row.file_name.empty()) throw FormatError(where + ": empty file_name");
    if (!names.insert(row.file_name).second) throw ConflictError(where + ": duplicate file_name " + row.file_name);
    row.audio_path = audio_root / row.file_name;
    for (std::size_t k = 1; k < rec.size(); ++k) {
      std::string caption = text::normalize_caption(rec[k]);
      if (caption.empty()) {
        m.warnings.push_back(where + ": caption_" + std::to_string(k) + " of " + row.file_name + " is empty");
        log::warn(m.warnings.back());
        continue;
      }
      row.captions.push_back(std::move(caption));
    }
    if (row.captions.empty()) throw InputError(where + ": " + row.file_name + " has no non-empty caption");
    if (!std::filesystem::is_regular_file(row.audio_path)) missing.push_back(row.audio_path.string());
    m.rows.push_back(std::move(row));
  }
  if (!missing.empty()) {
    throw InputError(origin + ": " + std::to_string(missing.size()) + " audio file(s) missing: " + join(missing, ", "));
  }
  return m;
}

DatasetManifest merge_splits(const DatasetManifest& a, const DatasetManifest& b) {
  DatasetManifest out;
  out.split = a.split.empty() ? b.split : (b.split.empty() ? a.split : a.split + "+" + b.split);
  std::set<std::string> names;
  for (const auto* part : {&a, &b}) {
    for (const auto& row : part->rows) {
      if (!names.insert(row.file_name).second) {
        throw ConflictError("file name " + row.file_name + " appears in both splits");
      }
      out.rows.push_back(row);
    }
    out.warnings.insert(out.warnings.end(), part->warnings.begin(), part->warnings.end());
  }
  return out;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path) {
  std::ostringstream os;
  os << join(expected_header(), ",") << "\n";
  for (const auto& row : manifest.rows) {
    if (row.captions.empty()) throw ContractError("manifest row " + row.file_name + " has no caption");
    os << csv_quote(row.file_name);
    for (std::size_t k = 0; k < kCaptionsPerClip; ++k) {
      os << ',' << csv_quote(row.captions[std::min(k, row.captions.size() - 1)]);
    }
    os << "\n";
  }
  std::ofstream out(csv_path, std::ios::binary);
  out << os.str();
  if (!out) throw IoError("cannot write manifest " + csv_path.string());
}

}  // namespace cl4ac::data

// Copyright 2026 The cl4ac-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cl4ac::data {

inline constexpr std::size_t kCaptionsPerClip = 5;

struct ManifestRow {
  std::string file_name;
  std::filesystem::path audio_path;
  std::vector<std::string> captions;  // normalized, non-empty
};

struct DatasetManifest {
  std::string split;
  std::vector<ManifestRow> rows;
  std::vector<std::string> warnings;
};

// Parses RFC 4180 CSV text (quoted fields, doubled quotes, CRLF). Each
// record is a list of fields.
std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& origin);
std::string csv_quote(const std::string& field);

// Reads a caption CSV with header file_name,caption_1..caption_5. Captions
// are normalized; empty ones are dropped with a warning. Every audio file
// must exist under audio_root; all missing ones are listed in one InputError.
DatasetManifest load_manifest(const std::filesystem::path& csv_path, const std::filesystem::path& audio_root,
                              const std::string& split = "");

// a then b. Throws ConflictError when a file name appears in both.
DatasetManifest merge_splits(const DatasetManifest& a, const DatasetManifest& b);

// Writes the Clotho header and one row per clip, padding to five captions
// by repeating the last one.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path);

}  // namespace cl4ac::data

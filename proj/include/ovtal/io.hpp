#pragma once

// Persistence: TALF feature files, JSON records, dataset directories and
// run manifests. All writers go through write_file_atomic.
//
// TALF layout (little-endian):
//   "TALF" | u32 version = 1 | u32 S | u32 D | S*D f32, row-major | u32 CRC32
// The CRC covers the f32 payload only.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ovtal/classifier.hpp"
#include "ovtal/eval.hpp"
#include "ovtal/experiment.hpp"
#include "ovtal/selftrain.hpp"
#include "ovtal/synth.hpp"
#include "ovtal/types.hpp"

namespace ovtal {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr std::uint32_t kTalfVersion = 1;

std::vector<std::uint8_t> encode_talf(const Matrix& features);
/// `source` only labels error messages.
Matrix decode_talf(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");
void write_talf(const fs::path& path, const Matrix& features);
Matrix read_talf(const fs::path& path);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const fs::path& path, std::string_view content);
std::string read_file(const fs::path& path);
/// Parse failures raise ConfigError when `is_config`, else DataError.
Json read_json(const fs::path& path, bool is_config = false);
/// Two-space indented JSON with a trailing newline.
std::string dump_json(const Json& j);

std::uint64_t fnv1a64(std::string_view bytes);

/// Checks that a video id can double as a file name.
void require_safe_id(const std::string& id, const std::string& where);

// ---- vocabulary ------------------------------------------------------------

Json vocabulary_to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const Json& j);

// ---- annotations -------------------------------------------------------------
// One record per video: {video_id, duration_snippets, instances: [{start, end,
// class_name}]}. Pseudo-labels replace class_name by actionness.

Json annotations_to_json(const std::vector<Video>& videos,
                         const std::vector<std::string>& class_names);
/// Features are left empty; `duration_snippets` becomes the row count with
/// zero columns until features are attached.
std::vector<Video> annotations_from_json(const Json& j,
                                         const std::vector<std::string>& class_names,
                                         bool require_class);

// ---- model -----------------------------------------------------------------

struct ModelFile {
  LocalizerParams params;
  std::string data_dir;  // dataset the model was trained on; may be empty
  std::string stage;     // "stage1" or "stage2"
};

Json model_to_json(const ModelFile& m);
ModelFile model_from_json(const Json& j);

// ---- predictions and reports -------------------------------------------------

Json predictions_to_json(const std::vector<Prediction>& preds, const Vocabulary& vocab);
std::vector<Prediction> predictions_from_json(const Json& j, const Vocabulary& vocab);

Json report_to_json(const EvalReport& report);
/// Rejects reports whose stored aggregates disagree with their per-class rows.
EvalReport report_from_json(const Json& j);

// ---- joint dataset -------------------------------------------------------------

Json joint_to_json(const JointDataset& joint, const std::vector<std::string>& class_names,
                   const std::string& data_dir);
struct JointFile {
  std::string data_dir;
  JointDataset joint;
};
JointFile joint_from_json(const Json& j, const std::vector<std::string>& class_names);

// ---- configuration -------------------------------------------------------------

/// Strict: unknown keys and type errors raise ConfigError naming the JSON path.
ExperimentConfig config_from_json(const Json& j);
Json config_to_json(const ExperimentConfig& cfg);

// ---- dataset directories ---------------------------------------------------------
// <dir>/dataset.json, vocabulary.json, {train,id,od,val}.json, features/<id>.talf.
// The id and od annotation files hold hidden ground truth for analysis only.

struct DatasetDir {
  Vocabulary vocab;
  std::vector<std::string> hidden_classes;  // distractor names
  std::vector<Video> train, id, od, val;

  std::vector<std::string> all_class_names() const;
  const std::vector<Video>& split(const std::string& name) const;
};

void write_dataset(const fs::path& dir, const Benchmark& bench, const ExperimentConfig& cfg);
DatasetDir read_dataset(const fs::path& dir);
/// Attaches features from <data_dir>/features/<id>.talf and checks lengths.
void load_features(const fs::path& data_dir, std::vector<Video>& videos);

// ---- manifests -------------------------------------------------------------------

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_hash;  // hex FNV-1a of the effective config JSON
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

/// Writes `<artifact>.manifest.json` next to the artifact (or manifest.json
/// inside it, for directories). Timestamps live only here.
void write_manifest(const fs::path& artifact, const Manifest& m);

}  // namespace ovtal

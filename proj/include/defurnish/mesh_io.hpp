#pragma once

#include "defurnish/mesh.hpp"

#include <filesystem>
#include <optional>

namespace defurnish {

/// Loads an OBJ (with optional MTL + texture) or PLY mesh.
///
/// Labels come from PLY face properties `class`/`instance` or from a JSON
/// sidecar `{"<face>": {"class": c, "instance": i}}` keyed by file face index.
/// Without an explicit sidecar, `<stem>.labels.json` next to the mesh is used
/// when it exists. Polygons are fan-triangulated; their label is duplicated.
/// Unlabelled faces get `class_map.unknown_class()`, instance 0.
LabeledMesh load_mesh(const std::filesystem::path& path, const std::optional<std::filesystem::path>& labels_path,
                      const ClassMap& class_map);

/// Writes OBJ (+ MTL, texture PNGs, label sidecar) or binary PLY (labels embedded,
/// texture PNGs alongside) depending on the extension.
void save_mesh(const LabeledMesh& mesh, const std::filesystem::path& path);

std::filesystem::path labels_sidecar_path(const std::filesystem::path& mesh_path);

/// Per file-face labels, as stored in the sidecar. Entries absent from the file are nullopt.
struct SidecarLabels {
  std::vector<std::optional<FaceLabel>> labels;
  std::vector<std::uint8_t> is_new;
};

SidecarLabels read_label_sidecar(const std::filesystem::path& path, std::size_t face_count, const ClassMap& class_map);
void write_label_sidecar(const LabeledMesh& mesh, const std::filesystem::path& path);

}  // namespace defurnish

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "catres/dataset.hpp"
#include "catres/pipeline.hpp"

namespace catres {

// Layout:
//   index.json                    navigation document + content hash
//   summary.json                  same bytes as the report's summary.json
//   neurons/<layer>/<index>.json  one document per neuron of both layers
struct BundleInfo {
  std::string content_hash;
  std::size_t documents = 0;
};

inline constexpr const char* kBundleFormat = "catres-bundle/1";

BundleInfo export_viewer_bundle(const ModelDataset& dataset, const AnalysisReport& report,
                                const std::filesystem::path& dir);

// SHA-256 over the sorted relative paths and bytes of every file in the
// bundle except index.json.
std::string bundle_content_hash(const std::filesystem::path& dir);

std::filesystem::path neuron_document_path(const NeuronRef& ref);  // relative

}  // namespace catres

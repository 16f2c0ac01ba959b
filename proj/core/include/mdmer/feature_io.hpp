#pragma once

#include <string>

#include "mdmer/dsp.hpp"

namespace mdmer::dsp {

/// Serialize a mixed feature to the MDMFEAT1 container: 8-byte magic, 4-byte
/// little-endian JSON header length, JSON header, row-major little-endian
/// float32 payload.
void write_feature_file(const std::string& path, const MixedFeature& feat, const DspConfig& cfg,
                        const std::string& clip_id);

struct FeatureFile {
  MixedFeature feature;
  std::string clip_id;
  std::string header_json;  // raw header, config echo included
};

FeatureFile read_feature_file(const std::string& path);

}  // namespace mdmer::dsp

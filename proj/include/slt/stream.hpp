#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slt/tensor.hpp"

namespace slt {

enum class SegmentKind : uint8_t { sign = 0, fingerspelling = 1, rest = 2 };

const char* segment_kind_name(SegmentKind k);

// Half-open frame range [start, end) with the tokens it realizes: one gloss
// index for sign segments, letter indices for fingerspelling, none for rest.
struct Segment {
  int64_t start = 0;
  int64_t end = 0;
  SegmentKind kind = SegmentKind::rest;
  std::vector<int64_t> tokens;
};

enum class Modality : uint8_t { manual = 0, face = 1 };

// Per-frame feature matrix for one modality, standing in for backbone
// features. Segments are non-overlapping, ordered, and within [0, T).
struct FeatureStream {
  Tensor frames;  // [T x d_feat]
  Modality modality = Modality::manual;
  double frame_rate = 25.0;
  std::vector<Segment> segments;

  int64_t t_len() const { return frames.rows(); }
  int64_t d_feat() const { return frames.cols(); }
  void validate() const;  // throws ValidationError on bad segments
};

}  // namespace slt

#pragma once

#include <map>
#include <string>
#include <vector>

#include "crownacm/raster.hpp"

namespace crownacm {

struct Detection {
    std::string image_id;
    BinaryMask mask;
    Point centroid;
};

struct MatchedPair {
    std::string image_id;
    int ref_id = -1;  // index within the image's reference list
    int det_id = -1;  // index within the image's detection list
    double iou = 0.0;
    double centroid_distance = 0.0;
};

struct ImageTally {
    int refs = 0;
    int dets = 0;
    int matched = 0;
};

struct MatchReport {
    std::vector<MatchedPair> pairs;
    int unmatched_refs = 0;
    int unmatched_dets = 0;
    double mean_iou = 0.0;                // over matched pairs
    double precision = 1.0;
    double recall = 0.0;
    double mean_centroid_distance = 0.0;  // over matched pairs
    bool no_detections = false;           // precision reported as 1.0 by convention
    double iou_threshold = 0.5;
    std::map<std::string, ImageTally> per_image;
};

struct CrowdingBin {
    int min_refs = 0;
    int max_refs = 0;  // inclusive; 0 max means open-ended
    std::string label;
    int images = 0;
    int refs = 0;
    int dets = 0;
    int matched = 0;
    double recall = 0.0;
    double precision = 1.0;
};

struct CrowdingCurve {
    std::vector<CrowdingBin> bins;  // reference counts 1-3, 4-6, 7-10, 11+
};

/// Intersection over union of two same-sized masks; errors when both are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

/// One-to-one greedy matching in descending IoU order among pairs at or above
/// the threshold, ties broken by ascending (image id, ref id, det id).
MatchReport match_detections(const std::vector<Detection>& refs,
                             const std::vector<Detection>& dets, double iou_threshold = 0.5);

/// Recall/precision binned by per-image reference count.
CrowdingCurve recall_vs_crowding(const MatchReport& report);

}  // namespace crownacm

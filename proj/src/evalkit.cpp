#include "crownacm/evalkit.hpp"

#include <algorithm>
#include <cmath>

namespace crownacm {

double iou(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("iou: mask dimensions differ");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const bool pa = a.bits[i] != 0, pb = b.bits[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    if (uni == 0) throw std::invalid_argument("iou: both masks are empty");
    return static_cast<double>(inter) / static_cast<double>(uni);
}

MatchReport match_detections(const std::vector<Detection>& refs,
                             const std::vector<Detection>& dets, double iou_threshold) {
    MatchReport report;
    report.iou_threshold = iou_threshold;

    // Group by image; ids are positions within each image's list.
    std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> by_image;
    for (size_t i = 0; i < refs.size(); ++i)
        by_image[refs[i].image_id].first.push_back(static_cast<int>(i));
    for (size_t i = 0; i < dets.size(); ++i)
        by_image[dets[i].image_id].second.push_back(static_cast<int>(i));

    struct Candidate {
        std::string image_id;
        int ref_local, det_local;
        int ref_global, det_global;
        double iou;
    };
    std::vector<Candidate> candidates;

    for (auto& [image_id, lists] : by_image) {
        auto& [ref_ids, det_ids] = lists;
        ImageTally tally;
        tally.refs = static_cast<int>(ref_ids.size());
        tally.dets = static_cast<int>(det_ids.size());
        report.per_image[image_id] = tally;
        for (size_t r = 0; r < ref_ids.size(); ++r) {
            for (size_t d = 0; d < det_ids.size(); ++d) {
                const double v = iou(refs[ref_ids[r]].mask, dets[det_ids[d]].mask);
                if (v >= iou_threshold)
                    candidates.push_back({image_id, static_cast<int>(r), static_cast<int>(d),
                                          ref_ids[r], det_ids[d], v});
            }
        }
    }

    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        if (a.ref_local != b.ref_local) return a.ref_local < b.ref_local;
        return a.det_local < b.det_local;
    });

    std::vector<char> ref_used(refs.size(), 0), det_used(dets.size(), 0);
    double iou_sum = 0.0, dist_sum = 0.0;
    for (const Candidate& c : candidates) {
        if (ref_used[c.ref_global] || det_used[c.det_global]) continue;
        ref_used[c.ref_global] = det_used[c.det_global] = 1;
        const Point& rc = refs[c.ref_global].centroid;
        const Point& dc = dets[c.det_global].centroid;
        const double dist = std::hypot(rc.x - dc.x, rc.y - dc.y);
        report.pairs.push_back({c.image_id, c.ref_local, c.det_local, c.iou, dist});
        report.per_image[c.image_id].matched += 1;
        iou_sum += c.iou;
        dist_sum += dist;
    }

    const int matched = static_cast<int>(report.pairs.size());
    report.unmatched_refs = static_cast<int>(refs.size()) - matched;
    report.unmatched_dets = static_cast<int>(dets.size()) - matched;
    report.mean_iou = matched > 0 ? iou_sum / matched : 0.0;
    report.mean_centroid_distance = matched > 0 ? dist_sum / matched : 0.0;
    report.recall = refs.empty() ? 0.0 : static_cast<double>(matched) / static_cast<double>(refs.size());
    if (dets.empty()) {
        report.no_detections = true;
        report.precision = 1.0;  // documented convention; avoids NaN in aggregates
    } else {
        report.precision = static_cast<double>(matched) / static_cast<double>(dets.size());
    }
    return report;
}

CrowdingCurve recall_vs_crowding(const MatchReport& report) {
    CrowdingCurve curve;
    curve.bins = {
        {1, 3, "1-3"},
        {4, 6, "4-6"},
        {7, 10, "7-10"},
        {11, 0, "11+"},
    };
    for (const auto& [image_id, tally] : report.per_image) {
        for (CrowdingBin& bin : curve.bins) {
            const bool in_bin = tally.refs >= bin.min_refs &&
                                (bin.max_refs == 0 || tally.refs <= bin.max_refs);
            if (!in_bin) continue;
            bin.images += 1;
            bin.refs += tally.refs;
            bin.dets += tally.dets;
            bin.matched += tally.matched;
            break;
        }
    }
    for (CrowdingBin& bin : curve.bins) {
        bin.recall = bin.refs > 0 ? static_cast<double>(bin.matched) / bin.refs : 0.0;
        bin.precision = bin.dets > 0 ? static_cast<double>(bin.matched) / bin.dets : 1.0;
    }
    return curve;
}

}  // namespace crownacm

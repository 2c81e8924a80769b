#pragma once

#include <map>
#include <string>
#include <vector>

#include "anonreid/imaging.hpp"

namespace anonreid {

struct SampleMeta {
    int person_id = 0;
    int camera_id = 0;
};

// Peak signal-to-noise ratio on the [0,1] scale; +inf when the images match.
real psnr(const Image& a, const Image& b);

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, C1=(0.01)^2, C2=(0.03)^2,
// channels averaged, windows fully inside the image.
real ssim(const Image& a, const Image& b);

struct RankResult {
    // per retained query: match flag per gallery position, distance-ascending,
    // same-id same-camera entries excluded
    std::vector<std::vector<char>> flags;
    int dropped_queries = 0;  // queries with zero valid gallery matches
};

RankResult rank_list(const Tensor& dist, const std::vector<SampleMeta>& query_meta,
                     const std::vector<SampleMeta>& gallery_meta, bool cross_camera = true);

// rank-k accuracy for k in {1,5,10}
std::map<int, real> cmc(const std::vector<std::vector<char>>& flags);

real mean_ap(const std::vector<std::vector<char>>& flags);
real mean_inp(const std::vector<std::vector<char>>& flags);

struct EvalReport {
    std::map<int, real> rank_k;  // k -> accuracy in [0,1]
    real mAP = 0;
    real mINP = 0;
    real psnr_db = 0;  // may be +inf
    real ssim_val = 0;

    // flat key-value forms; percentages rendered to one decimal
    std::string to_csv_header() const;
    std::string to_csv_row() const;
    std::string to_json() const;
};

// Euclidean distance matrix between row-feature matrices (Q,D) and (G,D).
Tensor distance_matrix(const Tensor& query_feats, const Tensor& gallery_feats);

}  // namespace anonreid

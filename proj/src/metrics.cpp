#include "anonreid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace anonreid {

real psnr(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w) throw std::invalid_argument("psnr: shape mismatch");
    real mse = 0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        real d = a.v[i] - b.v[i];
        mse += d * d;
    }
    mse /= static_cast<real>(a.v.size());
    if (mse == 0) return std::numeric_limits<real>::infinity();
    return 10 * std::log10(real(1) / mse);
}

static std::vector<real> ssim_window() {
    const int win = 11;
    const real sigma = 1.5;
    std::vector<real> w(win * win);
    real sum = 0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            real dy = i - 5, dx = j - 5;
            w[i * win + j] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
            sum += w[i * win + j];
        }
    for (auto& x : w) x /= sum;
    return w;
}

real ssim(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w) throw std::invalid_argument("ssim: shape mismatch");
    const int win = 11;
    if (a.h < win || a.w < win) throw std::invalid_argument("ssim: image smaller than window");
    static const std::vector<real> w = ssim_window();
    const real C1 = real(0.01) * real(0.01), C2 = real(0.03) * real(0.03);
    real total = 0;
    long count = 0;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y + win <= a.h; ++y) {
            for (int x = 0; x + win <= a.w; ++x) {
                real mu_a = 0, mu_b = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        const real wij = w[i * win + j];
                        mu_a += wij * a.at(y + i, x + j, c);
                        mu_b += wij * b.at(y + i, x + j, c);
                    }
                real va = 0, vb = 0, cov = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        const real wij = w[i * win + j];
                        const real da = a.at(y + i, x + j, c) - mu_a;
                        const real db = b.at(y + i, x + j, c) - mu_b;
                        va += wij * da * da;
                        vb += wij * db * db;
                        cov += wij * da * db;
                    }
                const real num = (2 * mu_a * mu_b + C1) * (2 * cov + C2);
                const real den = (mu_a * mu_a + mu_b * mu_b + C1) * (va + vb + C2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / static_cast<real>(count);
}

RankResult rank_list(const Tensor& dist, const std::vector<SampleMeta>& query_meta,
                     const std::vector<SampleMeta>& gallery_meta, bool cross_camera) {
    if (dist.ndim() != 2 || dist.dim(0) != static_cast<int>(query_meta.size()) ||
        dist.dim(1) != static_cast<int>(gallery_meta.size()))
        throw std::invalid_argument("rank_list: metadata lengths do not match matrix dims");
    RankResult res;
    const int G = dist.dim(1);
    std::vector<int> order(G);
    for (size_t q = 0; q < query_meta.size(); ++q) {
        std::iota(order.begin(), order.end(), 0);
        const int qi = static_cast<int>(q);
        // stable sort: ties broken by gallery index
        std::stable_sort(order.begin(), order.end(),
                         [&](int i, int j) { return dist.at2(qi, i) < dist.at2(qi, j); });
        std::vector<char> flags;
        int matches = 0;
        for (int g : order) {
            if (cross_camera && gallery_meta[g].person_id == query_meta[q].person_id &&
                gallery_meta[g].camera_id == query_meta[q].camera_id)
                continue;  // same-id same-camera excluded by protocol
            const char m = gallery_meta[g].person_id == query_meta[q].person_id ? 1 : 0;
            matches += m;
            flags.push_back(m);
        }
        if (matches == 0) {
            ++res.dropped_queries;
            continue;
        }
        res.flags.push_back(std::move(flags));
    }
    return res;
}

std::map<int, real> cmc(const std::vector<std::vector<char>>& flags) {
    if (flags.empty()) throw std::invalid_argument("cmc: empty query set");
    std::map<int, real> out{{1, 0}, {5, 0}, {10, 0}};
    for (const auto& f : flags) {
        int first = -1;
        for (size_t i = 0; i < f.size(); ++i)
            if (f[i]) {
                first = static_cast<int>(i) + 1;
                break;
            }
        if (first < 0) continue;  // no match: contributes 0 at every rank
        for (auto& [k, acc] : out)
            if (first <= k) acc += 1;
    }
    for (auto& [k, acc] : out) acc /= static_cast<real>(flags.size());
    return out;
}

real mean_ap(const std::vector<std::vector<char>>& flags) {
    if (flags.empty()) throw std::invalid_argument("mean_ap: empty query set");
    real total = 0;
    for (const auto& f : flags) {
        int hits = 0;
        real ap = 0;
        for (size_t i = 0; i < f.size(); ++i)
            if (f[i]) {
                ++hits;
                ap += static_cast<real>(hits) / static_cast<real>(i + 1);
            }
        if (hits == 0) throw std::invalid_argument("mean_ap: query without matches");
        total += ap / hits;
    }
    return total / static_cast<real>(flags.size());
}

real mean_inp(const std::vector<std::vector<char>>& flags) {
    if (flags.empty()) throw std::invalid_argument("mean_inp: empty query set");
    real total = 0;
    for (const auto& f : flags) {
        int hits = 0;
        long hardest = -1;
        for (size_t i = 0; i < f.size(); ++i)
            if (f[i]) {
                ++hits;
                hardest = static_cast<long>(i) + 1;
            }
        if (hits == 0) throw std::invalid_argument("mean_inp: query without matches");
        total += static_cast<real>(hits) / static_cast<real>(hardest);
    }
    return total / static_cast<real>(flags.size());
}

static std::string pct(real x) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << x * 100;
    return os.str();
}

static std::string fmt_psnr(real x) {
    if (std::isinf(x)) return "inf";
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << x;
    return os.str();
}

static std::string fmt_ssim(real x) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << x;
    return os.str();
}

std::string EvalReport::to_csv_header() const { return "rank1,rank5,rank10,mAP,mINP,psnr,ssim"; }

std::string EvalReport::to_csv_row() const {
    std::ostringstream os;
    os << pct(rank_k.count(1) ? rank_k.at(1) : 0) << "," << pct(rank_k.count(5) ? rank_k.at(5) : 0)
       << "," << pct(rank_k.count(10) ? rank_k.at(10) : 0) << "," << pct(mAP) << "," << pct(mINP)
       << "," << fmt_psnr(psnr_db) << "," << fmt_ssim(ssim_val);
    return os.str();
}

std::string EvalReport::to_json() const {
    std::ostringstream os;
    os << "{\"rank1\":" << pct(rank_k.count(1) ? rank_k.at(1) : 0)
       << ",\"rank5\":" << pct(rank_k.count(5) ? rank_k.at(5) : 0)
       << ",\"rank10\":" << pct(rank_k.count(10) ? rank_k.at(10) : 0) << ",\"mAP\":" << pct(mAP)
       << ",\"mINP\":" << pct(mINP) << ",\"psnr\":\"" << fmt_psnr(psnr_db) << "\",\"ssim\":"
       << fmt_ssim(ssim_val) << "}";
    return os.str();
}

Tensor distance_matrix(const Tensor& query_feats, const Tensor& gallery_feats) {
    if (query_feats.ndim() != 2 || gallery_feats.ndim() != 2 ||
        query_feats.dim(1) != gallery_feats.dim(1))
        throw std::invalid_argument("distance_matrix: feature dims mismatch");
    const int Q = query_feats.dim(0), G = gallery_feats.dim(0), D = query_feats.dim(1);
    Tensor out({Q, G});
    for (int q = 0; q < Q; ++q)
        for (int g = 0; g < G; ++g) {
            real sq = 0;
            for (int d = 0; d < D; ++d) {
                real diff = query_feats.at2(q, d) - gallery_feats.at2(g, d);
                sq += diff * diff;
            }
            out.at2(q, g) = std::sqrt(sq);
        }
    return out;
}

}  // namespace anonreid

#include "gausssurf/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace gausssurf {

KdTree::KdTree(std::vector<Vec3> points, int leaf_size) : points_(std::move(points))
{
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!points_.empty()) {
        nodes_.reserve(2 * points_.size() / std::max(1, leaf_size) + 1);
        build(0, static_cast<int>(points_.size()), std::max(1, leaf_size));
    }
}

int KdTree::build(int begin, int end, int leaf_size)
{
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    nodes_[id].lo = lo;
    nodes_[id].hi = hi;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin <= leaf_size) {
        return id;
    }
    int axis;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    const int left = build(begin, mid, leaf_size);
    const int right = build(mid, end, leaf_size);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

namespace {

double box_distance2(const Vec3& q, const Vec3& lo, const Vec3& hi)
{
    const Vec3 d = (lo - q).cwiseMax(q - hi).cwiseMax(0.0);
    return d.squaredNorm();
}

} // namespace

void KdTree::search(int node_id, const Vec3& q, std::size_t k, std::vector<std::pair<double, int>>& heap) const
{
    const Node& node = nodes_[node_id];
    if (heap.size() == k && box_distance2(q, node.lo, node.hi) > heap.front().first) {
        return;
    }
    if (node.left < 0) {
        for (int i = node.begin; i < node.end; ++i) {
            const int id = order_[i];
            const std::pair<double, int> cand{(points_[id] - q).squaredNorm(), id};
            if (heap.size() < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end());
            } else if (cand < heap.front()) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end());
            }
        }
        return;
    }
    const double dl = box_distance2(q, nodes_[node.left].lo, nodes_[node.left].hi);
    const double dr = box_distance2(q, nodes_[node.right].lo, nodes_[node.right].hi);
    if (dl <= dr) {
        search(node.left, q, k, heap);
        search(node.right, q, k, heap);
    } else {
        search(node.right, q, k, heap);
        search(node.left, q, k, heap);
    }
}

std::pair<int, double> KdTree::nearest(const Vec3& q) const
{
    const auto r = knn(q, 1);
    return {r.front().second, r.front().first};
}

std::vector<std::pair<double, int>> KdTree::knn(const Vec3& q, int k) const
{
    std::vector<std::pair<double, int>> heap;
    if (points_.empty() || k <= 0) {
        return heap;
    }
    const std::size_t kk = std::min<std::size_t>(k, points_.size());
    heap.reserve(kk);
    search(0, q, kk, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
}

} // namespace gausssurf

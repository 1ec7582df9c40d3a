#pragma once

#include "gausssurf/common.hpp"

#include <utility>
#include <vector>

namespace gausssurf {

/// Static 3D k-d tree over a point set. Query results are ordered by
/// (squared distance, index), so equal distances break toward lower ids.
class KdTree {
public:
    KdTree() = default;
    explicit KdTree(std::vector<Vec3> points, int leaf_size = 8);

    std::size_t size() const { return points_.size(); }
    const Vec3& point(int i) const { return points_[i]; }

    /// (index, squared distance) of the nearest point. Tree must be non-empty.
    std::pair<int, double> nearest(const Vec3& q) const;

    /// Up to k (squared distance, index) pairs, ascending.
    std::vector<std::pair<double, int>> knn(const Vec3& q, int k) const;

private:
    struct Node {
        Vec3 lo, hi;
        int begin = 0, end = 0;
        int left = -1, right = -1;
    };

    int build(int begin, int end, int leaf_size);
    void search(int node, const Vec3& q, std::size_t k, std::vector<std::pair<double, int>>& heap) const;

    std::vector<Vec3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

} // namespace gausssurf

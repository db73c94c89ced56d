#pragma once

#include <numeric>
#include <vector>

namespace linemap {

// Union by smaller root index, so component representatives do not depend on
// the order of unions.
class UnionFind {
 public:
    explicit UnionFind(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    int find(int x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b)
            return false;
        if (b < a)
            std::swap(a, b);
        parent_[b] = a;
        return true;
    }

 private:
    std::vector<int> parent_;
};

}  // namespace linemap

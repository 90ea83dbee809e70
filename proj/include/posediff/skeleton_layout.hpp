#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace posediff {

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend constexpr bool operator==(const Rgb&, const Rgb&) = default;
};

enum class Group { Body, Feet, Face, LeftHand, RightHand };

inline const char* to_string(Group g) {
  switch (g) {
    case Group::Body: return "body";
    case Group::Feet: return "feet";
    case Group::Face: return "face";
    case Group::LeftHand: return "left_hand";
    case Group::RightHand: return "right_hand";
  }
  return "?";
}

struct Limb {
  std::size_t a = 0;
  std::size_t b = 0;
  Group group = Group::Body;
  Rgb color{};
};

inline constexpr int kNoParent = -1;

/// Keypoint index map, limb list, palette and bone tree of a skeleton.
struct SkeletonLayout {
  std::string name;
  std::vector<Group> groups;           // one per keypoint
  std::vector<Rgb> keypoint_colors;    // one per keypoint
  std::vector<Limb> limbs;
  std::vector<int> parent;             // bone tree; kNoParent at the root, empty if none
  std::size_t root_index = 0;

  std::size_t keypoint_count() const { return groups.size(); }
  bool has_bone_tree() const { return !parent.empty(); }

  /// Keypoint indices of a group, ascending.
  std::vector<std::size_t> group_indices(Group g) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (groups[i] == g) out.push_back(i);
    }
    return out;
  }

  /// Parent-before-child visiting order of the bone tree.
  std::vector<std::size_t> bone_order() const {
    std::vector<std::vector<std::size_t>> children(keypoint_count());
    for (std::size_t i = 0; i < parent.size(); ++i) {
      if (parent[i] != kNoParent) children[static_cast<std::size_t>(parent[i])].push_back(i);
    }
    std::vector<std::size_t> order{root_index};
    for (std::size_t head = 0; head < order.size(); ++head) {
      for (auto c : children[order[head]]) order.push_back(c);
    }
    return order;
  }

  /// Throws std::invalid_argument naming the first broken invariant.
  void validate() const {
    const auto n = keypoint_count();
    auto fail = [&](const std::string& msg) {
      throw std::invalid_argument("layout '" + name + "': " + msg);
    };
    if (n == 0) fail("no keypoints");
    if (keypoint_colors.size() != n) fail("keypoint palette size does not match keypoint count");
    auto in_unit = [](const Rgb& c) {
      return c.r >= 0 && c.r <= 1 && c.g >= 0 && c.g <= 1 && c.b >= 0 && c.b <= 1;
    };
    for (const auto& c : keypoint_colors) {
      if (!in_unit(c)) fail("palette color outside [0,1]");
    }
    for (const auto& l : limbs) {
      if (l.a >= n || l.b >= n) fail("limb index out of range");
      if (!in_unit(l.color)) fail("palette color outside [0,1]");
    }
    if (!has_bone_tree()) return;
    if (parent.size() != n) fail("bone tree size does not match keypoint count");
    if (root_index >= n || parent[root_index] != kNoParent) fail("root has a parent");
    for (std::size_t i = 0; i < n; ++i) {
      if (i != root_index && (parent[i] < 0 || static_cast<std::size_t>(parent[i]) >= n)) {
        fail("keypoint " + std::to_string(i) + " has no valid parent");
      }
    }
    if (bone_order().size() != n) fail("bone tree is cyclic or disconnected");
  }
};

using LayoutPtr = std::shared_ptr<const SkeletonLayout>;

namespace detail {

// OpenPose body palette.
inline const std::vector<Rgb>& body_palette() {
  static const std::vector<Rgb> p = [] {
    const int raw[18][3] = {{255, 0, 0},   {255, 85, 0},  {255, 170, 0}, {255, 255, 0}, {170, 255, 0},
                            {85, 255, 0},  {0, 255, 0},   {0, 255, 85},  {0, 255, 170}, {0, 255, 255},
                            {0, 170, 255}, {0, 85, 255},  {0, 0, 255},   {85, 0, 255},  {170, 0, 255},
                            {255, 0, 255}, {255, 0, 170}, {255, 0, 85}};
    std::vector<Rgb> v;
    for (const auto& c : raw) v.push_back({c[0] / 255.0, c[1] / 255.0, c[2] / 255.0});
    return v;
  }();
  return p;
}

// Thumb, index, middle, ring, little.
inline const std::vector<Rgb>& finger_palette() {
  static const std::vector<Rgb> p = {
      {1.0, 0.0, 0.0}, {1.0, 0.6, 0.0}, {0.4, 1.0, 0.0}, {0.0, 0.8, 1.0}, {0.6, 0.0, 1.0}};
  return p;
}

inline SkeletonLayout build_coco_wholebody_133() {
  SkeletonLayout l;
  l.name = "coco_wholebody_133";
  l.groups.resize(133);
  l.keypoint_colors.resize(133);
  l.parent.assign(133, kNoParent);
  l.root_index = 0;
  const auto& body = body_palette();

  // 0-16 body (COCO order), 17-22 feet, 23-90 face, 91-111 left hand, 112-132 right hand.
  for (std::size_t i = 0; i < 133; ++i) {
    if (i <= 16) {
      l.groups[i] = Group::Body;
      l.keypoint_colors[i] = body[i % body.size()];
    } else if (i <= 22) {
      l.groups[i] = Group::Feet;
      l.keypoint_colors[i] = body[(i + 1) % body.size()];
    } else if (i <= 90) {
      l.groups[i] = Group::Face;
      l.keypoint_colors[i] = {1.0, 1.0, 1.0};
    } else {
      l.groups[i] = i <= 111 ? Group::LeftHand : Group::RightHand;
      const std::size_t local = (i - 91) % 21;
      l.keypoint_colors[i] = local == 0 ? Rgb{0.0, 0.0, 1.0} : finger_palette()[(local - 1) / 4];
    }
  }

  const std::pair<std::size_t, std::size_t> body_limbs[] = {
      {15, 13}, {13, 11}, {16, 14}, {14, 12}, {11, 12}, {5, 11}, {6, 12}, {5, 6}, {5, 7}, {6, 8},
      {7, 9},   {8, 10},  {1, 2},   {0, 1},   {0, 2},   {1, 3},  {2, 4},  {3, 5}, {4, 6}};
  std::size_t k = 0;
  for (auto [a, b] : body_limbs) l.limbs.push_back({a, b, Group::Body, body[k++ % body.size()]});
  const std::pair<std::size_t, std::size_t> feet_limbs[] = {{15, 17}, {15, 18}, {15, 19},
                                                            {16, 20}, {16, 21}, {16, 22}};
  for (auto [a, b] : feet_limbs) l.limbs.push_back({a, b, Group::Feet, l.keypoint_colors[b]});
  for (std::size_t base : {std::size_t{91}, std::size_t{112}}) {
    const Group g = base == 91 ? Group::LeftHand : Group::RightHand;
    for (std::size_t finger = 0; finger < 5; ++finger) {
      const Rgb c = finger_palette()[finger];
      std::size_t prev = base;
      for (std::size_t joint = 0; joint < 4; ++joint) {
        const std::size_t cur = base + 1 + finger * 4 + joint;
        l.limbs.push_back({prev, cur, g, c});
        prev = cur;
      }
    }
  }

  // Bone tree rooted at the nose; shoulders hang off the nose since COCO has no neck.
  auto& p = l.parent;
  p[1] = 0; p[2] = 0; p[3] = 1; p[4] = 2;
  p[5] = 0; p[6] = 0; p[7] = 5; p[8] = 6; p[9] = 7; p[10] = 8;
  p[11] = 5; p[12] = 6; p[13] = 11; p[14] = 12; p[15] = 13; p[16] = 14;
  p[17] = 15; p[18] = 15; p[19] = 15; p[20] = 16; p[21] = 16; p[22] = 16;
  for (std::size_t i = 23; i <= 90; ++i) p[i] = 0;
  for (std::size_t base : {std::size_t{91}, std::size_t{112}}) {
    p[base] = base == 91 ? 9 : 10;
    for (std::size_t finger = 0; finger < 5; ++finger) {
      int prev = static_cast<int>(base);
      for (std::size_t joint = 0; joint < 4; ++joint) {
        const std::size_t cur = base + 1 + finger * 4 + joint;
        p[cur] = prev;
        prev = static_cast<int>(cur);
      }
    }
  }
  l.validate();
  return l;
}

struct LayoutRegistry {
  std::mutex mutex;
  std::map<std::string, LayoutPtr> layouts;

  static LayoutRegistry& instance() {
    static LayoutRegistry r;
    return r;
  }

 private:
  LayoutRegistry() {
    auto coco = std::make_shared<const SkeletonLayout>(build_coco_wholebody_133());
    layouts.emplace(coco->name, coco);
  }
};

}  // namespace detail

inline constexpr const char* kWholeBody133 = "coco_wholebody_133";

/// Registered layout by name, or nullptr.
inline LayoutPtr find_layout(const std::string& name) {
  auto& reg = detail::LayoutRegistry::instance();
  std::lock_guard lock(reg.mutex);
  auto it = reg.layouts.find(name);
  return it == reg.layouts.end() ? nullptr : it->second;
}

inline LayoutPtr wholebody_layout() { return find_layout(kWholeBody133); }

/// Validates and registers an alternate layout; replaces any layout of the same name.
inline LayoutPtr register_layout(SkeletonLayout layout) {
  layout.validate();
  auto ptr = std::make_shared<const SkeletonLayout>(std::move(layout));
  auto& reg = detail::LayoutRegistry::instance();
  std::lock_guard lock(reg.mutex);
  reg.layouts[ptr->name] = ptr;
  return ptr;
}

}  // namespace posediff

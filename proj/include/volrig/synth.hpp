#pragma once

#include "volrig/skeleton.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace volrig {

enum class SynthKind { Biped, Quadruped, Star };

SynthKind parse_synth_kind(const std::string& s);
std::string to_string(SynthKind kind);

struct Capsule {
  Vec3 a, b;
  double radius;
};

/// Zero level set of f (negative inside) by marching tetrahedra over a regular lattice
/// spanning [lo, hi]. Shared lattice edges share vertices, so closed level sets give
/// watertight outward-oriented meshes.
TriangleMesh mesh_level_set(const std::function<double(const Vec3&)>& f, const Vec3& lo, const Vec3& hi, double step);

/// Union of capsules as a single closed surface.
TriangleMesh capsule_union_mesh(const std::vector<Capsule>& capsules, double step);

/// Bilaterally symmetric (about x = 0) tube character in raw, unnormalized coordinates.
RiggedCharacter make_synthetic_character(SynthKind kind, std::uint64_t seed, double step = 0.02);

/// Closed primitives.
TriangleMesh make_uv_sphere(const Vec3& center, double radius, int stacks, int slices);
TriangleMesh make_cylinder(const Vec3& a, const Vec3& b, double radius, int segments, int rings = 1);
TriangleMesh make_box(const Vec3& lo, const Vec3& hi);

}  // namespace volrig

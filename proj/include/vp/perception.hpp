#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vp/common.hpp"
#include "vp/kinematics.hpp"
#include "vp/voxel_world.hpp"

namespace vp {

inline constexpr std::size_t kFullObsDim = 83;
inline constexpr std::size_t kLiteObsDim = 50;
inline constexpr std::size_t kLidarRays = 26;
inline constexpr int kLidarAzimuths = 13;
inline constexpr double kLidarElevationDeg = 15.0;

// Normalizers shared by the encoder and by policies decoding observations.
namespace norm {
inline constexpr double kRange = 60.0;        // m
inline constexpr double kRelVelocity = 10.0;  // m/s
inline constexpr double kAccel = 5.0;         // m/s^2
inline constexpr double kRate = 0.8;          // rad/s
}  // namespace norm

// Zero-based offsets into the 83-D vector.
namespace full_obs {
inline constexpr std::size_t kLidar = 0;        // 26
inline constexpr std::size_t kTargetPos = 26;   // 3, body frame
inline constexpr std::size_t kTargetVel = 29;   // 3, body frame
inline constexpr std::size_t kSelfVel = 32;     // 3
inline constexpr std::size_t kSelfAccel = 35;   // 3
inline constexpr std::size_t kSelfRates = 38;   // 3 (roll, pitch, yaw)
inline constexpr std::size_t kTeammates = 41;   // 3 x 8
inline constexpr std::size_t kTeammateStride = 8;
inline constexpr std::size_t kGuidance = 65;    // 3, body frame
inline constexpr std::size_t kAgentId = 68;     // 4
inline constexpr std::size_t kMode = 72;
inline constexpr std::size_t kDelay = 73;
inline constexpr std::size_t kSlot = 74;        // 7
inline constexpr std::size_t kEncirclement = 81;  // 2
}  // namespace full_obs

// Zero-based offsets into the 50-D vector (dims 1..41 then 66..74 of the full layout).
namespace lite_obs {
inline constexpr std::size_t kLidar = 0;
inline constexpr std::size_t kTargetPos = 26;
inline constexpr std::size_t kTargetVel = 29;
inline constexpr std::size_t kSelfVel = 32;
inline constexpr std::size_t kSelfAccel = 35;
inline constexpr std::size_t kSelfRates = 38;
inline constexpr std::size_t kGuidance = 41;
inline constexpr std::size_t kAgentId = 44;
inline constexpr std::size_t kMode = 48;
inline constexpr std::size_t kDelay = 49;
}  // namespace lite_obs

enum class ObservationProfile { Full, Lite };

struct ChannelBlock {
  std::string_view name;
  std::size_t first;  // 1-based, inclusive
  std::size_t last;
  std::string_view normalizer;
  std::string_view description;
};

std::span<const ChannelBlock> full_channel_map();
// Machine-readable channel map for both observation profiles.
nlohmann::json channel_map_json();

struct ObservationFull {
  std::array<double, kFullObsDim> values{};
};

struct ObservationLite {
  std::array<double, kLiteObsDim> values{};
};

struct EvaderEstimate {
  Vec3 position;
  Vec3 velocity;  // world frame
};

struct SlotInfo {
  int slot = 0;              // 0..3
  double bearing_error = 0;  // rad, wrapped
  double radial_error = 0;   // m
  bool filled = false;
};

struct TeammateView {
  Vec3 position;
  Vec3 velocity;  // world frame
  bool alive = false;
};

struct ObservationInputs {
  const AgentState* self = nullptr;
  Vec3 self_acceleration;  // body frame, finite-differenced applied velocity
  std::span<const TeammateView> teammates;
  std::optional<EvaderEstimate> evader;  // nullopt when not observable
  Vec3 guidance;                          // world frame, unit or zero
  int agent_id = 0;
  int delay_k = 0;
  std::optional<SlotInfo> slot;
  std::array<double, 2> encirclement{};  // angular coverage / 2pi, vertical spread (normalized)
};

// Body-frame unit directions of the 26 LiDAR rays: elevation ring (-15, +15) major, azimuth minor.
const std::array<Vec3, kLidarRays>& lidar_directions();

ObservationFull assemble_full(const VoxelGrid& world, const ObservationInputs& in);

ObservationLite mask_observation(const ObservationFull& full);
ObservationLite mask_observation(std::span<const double> full);

std::vector<double> apply_noise(std::span<const double> obs, double sigma, Rng& rng);

// Tactical slots sit at fixed world azimuths around the evader; agent i owns slot i.
inline constexpr double kSlotRadius = 20.0;
SlotInfo compute_slot(const Vec3& self, const Vec3& evader, int agent_id, double visibility_range);

// Encirclement cues from pursuers within range of the evader.
std::array<double, 2> compute_encirclement(std::span<const Vec3> pursuers, const Vec3& evader, double range);

// Fraction of the circle (in [0,1]) spanned by a set of azimuths: 1 - largest_gap / 2pi.
double angular_coverage(std::vector<double> azimuths);

// Per-agent command FIFO; k = 0 is the identity.
class DelayBuffer {
 public:
  explicit DelayBuffer(int k = 0, ControlCommand prime = {});
  ControlCommand push_pop(const ControlCommand& cmd);
  [[nodiscard]] int delay() const { return k_; }

 private:
  int k_;
  std::deque<ControlCommand> fifo_;
};

}  // namespace vp

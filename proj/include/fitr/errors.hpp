#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fitr {

/// Failure categories surfaced by the library. The CLI prints the category
/// name verbatim so callers can parse it.
enum class Errc {
  DegeneratePolygon,
  MeshFailure,
  DegenerateTriangle,
  RankDeficientSpace,
  UnderdeterminedFit,
  NonFiniteCovariance,
  SpaceMismatch,
  AllZeroSpectrum,
  ZeroAssociation,
  SingularDesign,
  SelectionFailure,
  InvalidConfig,
  InvalidData,
  IoError,
  BootstrapFailure,
  StudyFailure,
};

constexpr std::string_view category_name(Errc code) {
  switch (code) {
    case Errc::DegeneratePolygon: return "DegeneratePolygon";
    case Errc::MeshFailure: return "MeshFailure";
    case Errc::DegenerateTriangle: return "DegenerateTriangle";
    case Errc::RankDeficientSpace: return "RankDeficientSpace";
    case Errc::UnderdeterminedFit: return "UnderdeterminedFit";
    case Errc::NonFiniteCovariance: return "NonFiniteCovariance";
    case Errc::SpaceMismatch: return "SpaceMismatch";
    case Errc::AllZeroSpectrum: return "AllZeroSpectrum";
    case Errc::ZeroAssociation: return "ZeroAssociation";
    case Errc::SingularDesign: return "SingularDesign";
    case Errc::SelectionFailure: return "SelectionFailure";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InvalidData: return "InvalidData";
    case Errc::IoError: return "IoError";
    case Errc::BootstrapFailure: return "BootstrapFailure";
    case Errc::StudyFailure: return "StudyFailure";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view category() const noexcept { return category_name(code_); }

 private:
  Errc code_;
};

}  // namespace fitr

#include "slidesift/error.hpp"

namespace slidesift {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::Io: return "IoError";
    case Errc::Decode: return "DecodeError";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::EmptyImage: return "EmptyImage";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::EmptyHistogram: return "EmptyHistogram";
    case Errc::TileLargerThanImage: return "TileLargerThanImage";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::UnsupportedTileSize: return "UnsupportedTileSize";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::Divergence: return "DivergenceDetected";
    case Errc::Config: return "ConfigError";
    case Errc::Format: return "FormatError";
    case Errc::Version: return "VersionError";
    case Errc::EmptyPredictionSet: return "EmptyPredictionSet";
    case Errc::MissingGroundTruth: return "MissingGroundTruth";
    case Errc::InsufficientSlides: return "InsufficientSlides";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NoRetainedTiles: return "NoRetainedTiles";
  }
  return "Error";
}

}  // namespace slidesift

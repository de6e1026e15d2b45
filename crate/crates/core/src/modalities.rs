//! Per-frame model inputs for each modality.

use crate::datamodel::{ImageBuffer, LandmarkFrame};
use crate::error::{PalsyError, Result};
use crate::geometry::{flatten_coordinates, handcrafted_values, RoleMap};
use crate::models::Modality;
use crate::raster::{render_face_rgb, render_line_segments, ContourSet};
use crate::synthgen::{default_contours, default_roles};

/// Topology and image size shared by every extraction.
#[derive(Clone, Debug, PartialEq)]
pub struct Extractor {
    pub roles: RoleMap,
    pub contours: ContourSet,
    pub image_size: usize,
}

impl Default for Extractor {
    fn default() -> Self {
        Extractor { roles: default_roles(), contours: default_contours(), image_size: 64 }
    }
}

impl Extractor {
    /// Per-sample tensor shape.
    pub fn sample_shape(&self, modality: Modality) -> Vec<usize> {
        match modality {
            Modality::Handcrafted => vec![29],
            Modality::Expression => vec![crate::datamodel::NUM_BLENDSHAPES],
            Modality::Coordinates => vec![2 * crate::datamodel::NUM_LANDMARKS],
            Modality::Rgb => vec![3, self.image_size, self.image_size],
            Modality::Bnw => vec![1, self.image_size, self.image_size],
        }
    }

    /// Flattened model input for one frame.
    pub fn extract(&self, frame: &LandmarkFrame, modality: Modality) -> Result<Vec<f64>> {
        Ok(self.extract_raw(frame, modality)?.into_values())
    }

    /// Model input for one frame, keeping images as 8-bit rasters.
    pub fn extract_raw(&self, frame: &LandmarkFrame, modality: Modality) -> Result<Raw> {
        let size = (self.image_size, self.image_size);
        match modality {
            Modality::Handcrafted => Ok(Raw::Values(handcrafted_values(frame, &self.roles)?.to_vec())),
            Modality::Expression => frame.blendshapes.clone().map(Raw::Values).ok_or_else(|| {
                PalsyError::ModalityUnavailable(format!(
                    "frame {}/{} has no blendshapes",
                    frame.subject_id, frame.frame_id
                ))
            }),
            Modality::Coordinates => Ok(Raw::Values(flatten_coordinates(frame, &self.roles)?.values)),
            Modality::Rgb => Ok(Raw::Image(render_face_rgb(&frame.landmarks, &self.contours, size)?)),
            Modality::Bnw => Ok(Raw::Image(render_line_segments(frame, &self.contours, size)?)),
        }
    }
}

/// One extracted sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Raw {
    Values(Vec<f64>),
    Image(ImageBuffer),
}

impl Raw {
    pub fn into_values(self) -> Vec<f64> {
        match self {
            Raw::Values(v) => v,
            Raw::Image(img) => img.to_planar(),
        }
    }

    /// Append the flattened sample to `out`.
    pub fn extend_into(&self, out: &mut Vec<f64>) {
        match self {
            Raw::Values(v) => out.extend_from_slice(v),
            Raw::Image(img) => out.extend(img.to_planar()),
        }
    }
}

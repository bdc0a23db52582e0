//! Saliency maps blended over grayscale images.

/// Min-max normalization to `[0, 1]`. A constant map has no range to
/// stretch, so it keeps its value clamped to `[0, 1]`.
pub fn normalize(map: &[f32]) -> Vec<f32> {
    let lo = map.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = map.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if hi - lo <= f32::EPSILON * hi.abs().max(1.0) {
        return map.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    }
    map.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Bilinear up-sampling of an `h × w` map to `to_h × to_w`.
pub fn upsample(map: &[f32], h: usize, w: usize, to_h: usize, to_w: usize) -> Vec<f32> {
    ssan_tensor::bilinear_resize_planes(map, 1, h, w, to_h, to_w)
}

/// `0.5·image + 0.5·saliency` per pixel.
pub fn blend_gray(image: &[f32], saliency: &[f32]) -> Vec<f32> {
    image.iter().zip(saliency).map(|(i, s)| 0.5 * i + 0.5 * s).collect()
}

/// Interleaved RGB of the image blended with a blue-to-red ramp of the
/// saliency.
pub fn blend_rgb(image: &[f32], saliency: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(image.len() * 3);
    for (&i, &s) in image.iter().zip(saliency) {
        for c in heat(s) {
            out.push(0.5 * i + 0.5 * c);
        }
    }
    out
}

fn heat(s: f32) -> [f32; 3] {
    let ramp = |center: f32| (1.5 - (4.0 * s - center).abs()).clamp(0.0, 1.0);
    [ramp(3.0), ramp(2.0), ramp(1.0)]
}

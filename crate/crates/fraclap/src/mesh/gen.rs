//! Disk and annulus mesh generation from concentric rings.
//!
//! Ring j of the disk carries 6j nodes, which yields near-equilateral
//! triangles and a quasi-uniform family under refinement. The annulus
//! between the domain boundary and the enclosing ball continues the rings
//! outward with node counts growing proportionally to the radius.

use super::{Mesh, MeshError, Point};

pub const DEFAULT_TRIANGLE_CAP: usize = 2_000_000;

/// Generate a quasi-uniform triangulation of the disk of radius
/// `domain_radius`, extended by an annulus up to `ball_radius`.
///
/// `ball_radius == domain_radius` is allowed and produces no auxiliary
/// triangles. The maximum element diameter stays below 1.5 * `target_h`.
pub fn generate_disk_mesh(
    domain_radius: f64,
    target_h: f64,
    ball_radius: f64,
) -> Result<Mesh, MeshError> {
    generate_disk_mesh_capped(domain_radius, target_h, ball_radius, DEFAULT_TRIANGLE_CAP)
}

pub fn generate_disk_mesh_capped(
    domain_radius: f64,
    target_h: f64,
    ball_radius: f64,
    max_triangles: usize,
) -> Result<Mesh, MeshError> {
    if !(domain_radius > 0.0) || !domain_radius.is_finite() {
        return Err(MeshError::Generate(format!(
            "domain radius must be positive, got {domain_radius}"
        )));
    }
    if ball_radius < domain_radius * (1.0 - 1e-12) {
        return Err(MeshError::Generate(format!(
            "ball radius {ball_radius} is smaller than the domain radius {domain_radius}"
        )));
    }
    if !(target_h > 0.0) || target_h >= domain_radius {
        return Err(MeshError::Generate(format!(
            "target h must lie in (0, domain radius), got {target_h}"
        )));
    }

    let n = (domain_radius / target_h).ceil() as usize;
    let dr = domain_radius / n as f64;
    let with_annulus = ball_radius > domain_radius * (1.0 + 1e-12);
    let n_annulus = if with_annulus {
        (((ball_radius - domain_radius) / dr).round() as usize).max(1)
    } else {
        0
    };

    // Ring radii and node counts: disk rings 0..=n, then annulus rings.
    let mut radii = Vec::with_capacity(n + n_annulus + 1);
    let mut counts = Vec::with_capacity(n + n_annulus + 1);
    radii.push(0.0);
    counts.push(1usize);
    for j in 1..=n {
        radii.push(dr * j as f64);
        counts.push(6 * j);
    }
    let da = if n_annulus > 0 {
        (ball_radius - domain_radius) / n_annulus as f64
    } else {
        0.0
    };
    for i in 1..=n_annulus {
        let r = domain_radius + da * i as f64;
        let c = 6 * ((r / dr).round() as usize).max(n);
        radii.push(r);
        counts.push(c);
    }

    let est_triangles: usize = (1..radii.len()).map(|j| counts[j - 1] + counts[j]).sum::<usize>() - 1;
    if est_triangles > max_triangles {
        return Err(MeshError::Generate(format!(
            "mesh would contain about {est_triangles} triangles, above the cap {max_triangles}"
        )));
    }

    let mut nodes: Vec<Point> = Vec::new();
    let mut ring_start = Vec::with_capacity(radii.len());
    for (r, c) in radii.iter().zip(counts.iter()) {
        ring_start.push(nodes.len());
        if *c == 1 {
            nodes.push([0.0, 0.0]);
        } else {
            for t in 0..*c {
                let theta = 2.0 * std::f64::consts::PI * t as f64 / *c as f64;
                nodes.push([r * theta.cos(), r * theta.sin()]);
            }
        }
    }

    let mut triangles: Vec<[usize; 3]> = Vec::with_capacity(est_triangles);
    // Center fan.
    let r1 = ring_start[1];
    for t in 0..counts[1] {
        triangles.push([ring_start[0], r1 + t, r1 + (t + 1) % counts[1]]);
    }
    let mut n_domain_triangles = counts[1];
    for j in 2..radii.len() {
        let inner: Vec<usize> = (0..counts[j - 1]).map(|t| ring_start[j - 1] + t).collect();
        let outer: Vec<usize> = (0..counts[j]).map(|t| ring_start[j] + t).collect();
        let band = triangulate_band(&inner, &outer);
        if j <= n {
            n_domain_triangles += band.len();
        }
        triangles.extend(band);
    }
    let n_aux = triangles.len() - n_domain_triangles;

    let boundary_start = ring_start[n];
    let boundary_end = boundary_start + counts[n];
    let mesh = Mesh {
        nodes,
        triangles,
        n_aux,
        boundary_nodes: (boundary_start..boundary_end).collect(),
        free_nodes: (0..boundary_start).collect(),
        ball_radius: if with_annulus { ball_radius } else { domain_radius },
    };
    debug_assert!(mesh.validate().is_ok());
    Ok(mesh)
}

/// Triangulate the band between two concentric rings of nodes by merging
/// them in angular order. Produces inner.len() + outer.len() triangles.
fn triangulate_band(inner: &[usize], outer: &[usize]) -> Vec<[usize; 3]> {
    let ma = inner.len();
    let mb = outer.len();
    let mut tris = Vec::with_capacity(ma + mb);
    let mut i = 0usize;
    let mut o = 0usize;
    while i < ma || o < mb {
        let next_a = if i < ma {
            (i + 1) as f64 / ma as f64
        } else {
            f64::INFINITY
        };
        let next_b = if o < mb {
            (o + 1) as f64 / mb as f64
        } else {
            f64::INFINITY
        };
        if next_a <= next_b {
            tris.push([inner[i], inner[(i + 1) % ma], outer[o % mb]]);
            i += 1;
        } else {
            tris.push([inner[i % ma], outer[o], outer[(o + 1) % mb]]);
            o += 1;
        }
    }
    tris
}

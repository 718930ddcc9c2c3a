//! For a constant potential the discrete Riesz kernel should depend on `x - y`
//! away from the box faces.

use rholab::grid::Grid;
use rholab::potentials::Potential;
use rholab::riesz::{build_operator, Transform};

#[test]
fn constant_potential_kernel_is_nearly_translation_invariant() {
    let g = Grid::new(3, 4.0, 17).unwrap();
    let op = build_operator(&Potential::constant(g, 1.0).unwrap()).unwrap();
    let m = g.mid_index();
    let at = |a: [isize; 3]| g.linear_index(&a.map(|k| (m as isize + k) as usize));
    let offsets: [[isize; 3]; 5] = [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0], [2, 0, 0]];
    let shifts: [[isize; 3]; 4] = [[1, 0, 0], [0, -1, 0], [1, 1, -1], [-2, 0, 1]];
    let mut worst = 0.0f64;
    for t in [Transform::Riesz, Transform::Dual] {
        for off in offsets {
            let reference = op.kernel(t, at([0, 0, 0]), at(off));
            let scale = reference.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for s in shifts {
                let x = at(s);
                let y = at([s[0] + off[0], s[1] + off[1], s[2] + off[2]]);
                let moved = op.kernel(t, x, y);
                for (a, b) in reference.iter().zip(&moved) {
                    worst = worst.max((a - b).abs() / scale);
                }
            }
        }
    }
    assert!(worst <= 0.10, "translation defect {worst}");
}

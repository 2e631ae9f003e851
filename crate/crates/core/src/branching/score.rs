/// Product score `max(obj_L - obj_p, eps) * max(obj_R - obj_p, eps)`.
pub fn branch_score(obj_l: f64, obj_r: f64, obj_p: f64, epsilon: f64) -> f64 {
    (obj_l - obj_p).max(epsilon) * (obj_r - obj_p).max(epsilon)
}

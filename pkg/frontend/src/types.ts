/** JSON shapes returned by the matching service HTTP API. */

export type ReviewVerdict = "confirm" | "reject";

export interface ReviewRow {
  id: string;
  query_id: string;
  candidate_id: string;
  cosine: number;
  state: "pending" | "confirmed" | "rejected";
  created_at: string;
  resolved_by: string | null;
  resolved_at: string | null;
  query_text: string;
  candidate_text: string;
}

export interface ClusterSummary {
  id: number;
  size: number;
}

export interface ClusterMember {
  id: string;
  text: string;
}

export interface ClusterDetail {
  id: number;
  size: number;
  members: ClusterMember[];
  representatives: {
    medoid: ClusterMember;
    anti_medoid: ClusterMember;
    random: ClusterMember;
  };
}

export interface PreviewCandidate {
  id: string;
  text: string;
  cosine: number;
  cluster_id: number;
}

export interface PreviewResult {
  preview: true;
  decision: "auto_matched" | "suggested" | "new_claim";
  best_cosine: number | null;
  candidates: PreviewCandidate[];
}

export interface SubmissionOutcome {
  message_id: string;
  decision: "auto_matched" | "suggested" | "new_claim";
  attached_cluster_id: number | null;
  cluster_id: number;
  suggestions: { candidate_id: string; cosine: number }[];
  review_ids: string[];
}

export interface Health {
  status: string;
  messages: number;
  pending_reviews: number;
  clusters: number;
  queued: number;
  provider: string;
}

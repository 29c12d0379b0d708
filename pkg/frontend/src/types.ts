export interface TaxonomyClass {
  id: number;
  name: string;
  kind: "stuff" | "thing";
  color: [number, number, number];
}

export interface Taxonomy {
  classes: TaxonomyClass[];
  unlabeled_id: number;
}

export interface CompleteRequest {
  sparse_png_b64: string;
  seed?: number;
  return_image?: boolean;
}

export interface CompleteResponse {
  dense_png_b64: string;
  boundary_png_b64: string;
  image_png_b64?: string;
}

export interface ResampleRequest {
  dense_png_b64: string;
  instance_png_b64: string;
  fraction?: number;
  k?: number;
  seed?: number;
  return_image?: boolean;
}

export interface Variant extends CompleteResponse {
  sparse_png_b64: string;
}

export function thingClasses(taxonomy: Taxonomy): TaxonomyClass[] {
  return taxonomy.classes.filter((c) => c.kind === "thing");
}

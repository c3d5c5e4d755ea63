__int64 __fastcall fn_mix(unsigned __int8 *a1, int a2)
{
  unsigned __int8 v3[32]; // [rsp+0h]
  unsigned int v4; // eax
  int i; // [rsp+28h]

  for ( i = 0; i < 28; ++i )
    v3[i] = (unsigned __int8)(7 * i);
  *(unsigned int *)&v3[28] = 0;
  for ( i = 0; i < a2; ++i )
    v3[i % 28] = (unsigned __int8)(v3[i % 28] ^ a1[i]);
  v4 = 0;
  for ( i = 0; i < 28; i += 4 )
    v4 = 33 * v4 + *(unsigned int *)&v3[i];
  v4 = 33 * v4 + *(unsigned int *)&v3[28];
  return v4;
}
